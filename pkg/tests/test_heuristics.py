import math
from decimal import Decimal
from fractions import Fraction

import pytest

from fermat_forge.heuristics import (
    ExpectationModel,
    ProbModel,
    expected_new_fermat_primes,
    fermat_log,
    fullness_ratio,
    fullness_ratio_prob,
    hardy_wright_expectation,
    hardy_wright_term,
    interval_requirement,
    mersenne_fullness,
    mersenne_harmonic,
    naive_prob,
    sieve_adjusted_prob,
    special_mersenne_expectation,
)
from fermat_forge.intervals import mertens_product
from fermat_forge.ntkernel import is_prime, probable_prime, sieve_primes
from fermat_forge.report import rational
from fermat_forge.utils import DomainError


def test_fermat_log():
    assert float(fermat_log(5)) == pytest.approx(math.log(4294967297))
    assert float(fermat_log(33)) == pytest.approx(2**33 * math.log(2))


def test_naive_prob_values():
    assert float(naive_prob(33).value) == pytest.approx(2 / (2**33 * math.log(2)))
    assert float(naive_prob(5).value) == pytest.approx(0.0902, abs=1e-4)
    assert naive_prob(5).model == ProbModel.NAIVE


def test_naive_prob_clamps_small_indices():
    p = naive_prob(0)
    assert p.clamped and p.value == 1
    assert float(p.raw) == pytest.approx(2 / math.log(3))


def test_estimates_decrease_in_n():
    naive = [naive_prob(n).raw for n in range(1, 40)]
    assert all(a > b for a, b in zip(naive, naive[1:]))
    adjusted = [sieve_adjusted_prob(n, 100).raw for n in range(1, 40)]
    assert all(a > b for a, b in zip(adjusted, adjusted[1:]))


def test_sieve_adjusted_is_naive_times_euler_product():
    assert abs(sieve_adjusted_prob(7, 2).raw / (2 * naive_prob(7).raw) - 1) < Decimal("1e-25")
    ratio = sieve_adjusted_prob(20, 1000).raw / naive_prob(20).raw
    assert abs(ratio / mertens_product(1000).product - 1) < Decimal("1e-25")
    assert sieve_adjusted_prob(5, 100).value > naive_prob(5).value


def test_sieve_adjusted_mertens_form_agrees():
    est = sieve_adjusted_prob(33, 10**6)
    assert abs(float(est.raw) / float(est.reference) - 1) < 0.02
    with pytest.raises(DomainError):
        sieve_adjusted_prob(33, 1)


def test_fullness_ratio_is_four_over_two_to_the_n():
    assert all(fullness_ratio(n) == Fraction(4, 2**n) for n in range(2, 1001))


def test_fullness_ratio_prob():
    p = fullness_ratio_prob(33)
    assert p.exact == "1/2147483648"
    assert float(p.value) == pytest.approx(4.657e-10, rel=1e-3)
    assert p.parameters == {"alpha": 2, "q": "2^66", "K": "2^35"}
    assert fullness_ratio_prob(2).exact == "1/1"
    assert fullness_ratio(10, 3) == Fraction(1, 2**18) < fullness_ratio(10, 2)


def test_fullness_ratio_domain():
    with pytest.raises(DomainError):
        fullness_ratio_prob(2, alpha=1)
    with pytest.raises(DomainError):
        fullness_ratio_prob(1)


def test_expectation_fullness_ratio_below_one_billionth():
    report = expected_new_fermat_primes(33)
    assert report.closed_form == rational(Fraction(1, 2**30))
    assert report.below_threshold
    assert report.relative_error < Decimal("1e-18")
    assert report.partial_sum < report.closed_form_value
    assert expected_new_fermat_primes(34).closed_form == "1/2147483648"


def test_expectation_naive_tail():
    report = expected_new_fermat_primes(33, ExpectationModel.NAIVE)
    assert 6.6e-10 < float(report.partial_sum) < 6.8e-10
    assert report.below_threshold
    with pytest.raises(DomainError):
        expected_new_fermat_primes(1)


def test_hardy_wright_bound_holds_at_every_truncation():
    for N in range(0, 1001, 50):
        report = hardy_wright_expectation(1, 0, N)
        assert report.partial_sum < 3
        assert float(report.partial_sum) < 2 / math.log(2) + 1e-6
        assert report.below_threshold
    assert hardy_wright_expectation(1, 0).partial_sum < 3


def test_hardy_wright_edges():
    assert hardy_wright_expectation(0, 0, 10).partial_sum == 0
    single = hardy_wright_expectation(1, 33, 33).partial_sum
    assert float(single) == pytest.approx(float(naive_prob(33).raw) / 2)
    assert float(hardy_wright_term(33).value) == pytest.approx(float(single))


def test_interval_requirement_fermat_scale():
    req = interval_requirement(fermat_index=33, delta=2, epsilon=0.1)
    L = 2**33 * math.log(2)
    assert float(req.r_uniformity) == pytest.approx(L**4.1, rel=1e-9)
    assert float(req.exponent_gap) == pytest.approx(L, rel=1e-9)
    assert req.selberg_satisfied and req.lemma_satisfied
    assert req.q_admissible


def test_interval_requirement_exponents():
    req = interval_requirement(10**6, delta=1, epsilon=0)
    L = math.log(10**6)
    assert float(req.r_equidistribution) == pytest.approx(L**2)
    assert float(req.r_uniformity) == pytest.approx(L**3)
    with pytest.raises(DomainError):
        interval_requirement(10**6, delta=0.5)
    with pytest.raises(DomainError):
        interval_requirement(10**6, fermat_index=5)


def test_mersenne_harmonic():
    assert mersenne_harmonic(2).partial_sum == Decimal("0.5")
    report = mersenne_harmonic(10**6)
    assert float(report.partial_sum) == pytest.approx(2.887, abs=1e-3)
    assert report.relative_error < Decimal("0.01")
    assert mersenne_harmonic(1000).partial_sum < mersenne_harmonic(2000).partial_sum


def test_mersenne_fullness():
    report = mersenne_fullness(11)
    assert report.factors == [23, 89]
    assert report.p_full and report.two_p_full and report.complete
    assert mersenne_fullness(29).two_p_full
    with pytest.raises(DomainError):
        mersenne_fullness(2)


def test_twin_and_sophie_germain_census():
    twin = special_mersenne_expectation(1, 2, 100)
    assert twin.census == [3, 5, 11, 17, 29, 41, 59, 71]
    assert twin.excluded == [2]
    assert twin.mersenne_primes == [3, 5, 17]
    sg = special_mersenne_expectation(2, 1, 20)
    assert sg.census == [2, 3, 5, 11]
    assert sg.mersenne_primes == [2, 3, 5]
    with pytest.raises(DomainError):
        special_mersenne_expectation(0, 3, 100)


@pytest.mark.slow
def test_twin_census_desk_scale(config):
    report = special_mersenne_expectation(1, 2, 2000, config=config)
    assert report.census == [p for p in sieve_primes(2000) if is_prime(p + 2)]
    assert report.mersenne_primes == [p for p in report.census if probable_prime(2**p - 1, config=config).is_prime]
    assert report.expectation.partial_sum < 1
    rows = report.doubling
    assert [r.X for r in rows] == sorted(r.X for r in rows)
    # the census sum grows more slowly than the full prime harmonic sum
    for a, b in zip(rows, rows[1:]):
        assert b.partial_sum - a.partial_sum < b.harmonic_sum - a.harmonic_sum
    assert all(r.shape_ratio is None or r.shape_ratio < 3 for r in rows)
