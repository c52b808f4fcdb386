import pytest

from fermat_forge.db import FactorDatabase
from fermat_forge.fermat import (
    FactorRecord,
    FermatNumber,
    Fullness,
    classify_lists,
    dubner_keller_stat,
    factor_search,
    ferma_t_primes,
    fermat_number,
    fullness_check,
    pairwise_coprime_check,
    recurrence_check,
    run_factor_search,
    verify_record,
)
from fermat_forge.utils import DEFAULT_CONFIG, DomainError, ResourceError


def test_fermat_numbers():
    assert [fermat_number(n) for n in range(5)] == [3, 5, 17, 257, 65537]
    assert fermat_number(5) == 4294967297
    assert FermatNumber(n=33).bits == 2**33 + 1
    assert FermatNumber(n=5).value() == 4294967297
    with pytest.raises(ResourceError):
        fermat_number(33)


def test_bit_budget_admits_f20_by_default():
    assert DEFAULT_CONFIG.bit_budget == 2**20
    assert fermat_number(20).bit_length() == 2**20 + 1
    assert recurrence_check(19)
    with pytest.raises(ResourceError, match="bit_budget"):
        fermat_number(21)


def test_recurrence_and_coprimality():
    assert all(recurrence_check(n) for n in range(8))
    assert pairwise_coprime_check(7)


def test_ferma_t_primes_include_two():
    found = ferma_t_primes(32)
    assert [p.n for p in found] == [0, 1, 2, 4, 8, 16]
    assert found[0].value == 2


def test_fullness():
    assert fullness_check(641, 5, Fullness.LUCAS)
    assert fullness_check(641, 5, Fullness.EULER)
    assert fullness_check(6700417, 5)
    assert not fullness_check(97, 5, Fullness.EULER)


def test_record_of_and_verify(f5_record):
    assert f5_record.p == 641
    assert f5_record.key == (5, 641)
    assert verify_record(f5_record) is None
    assert f5_record.model_dump(mode="json")["p"] == "641"


def test_verify_flags_tampered_records():
    assert verify_record(FactorRecord(n=5, k=5, m=7, p=643)) == "p != k*2^m + 1"
    assert "Lucas bound" in verify_record(FactorRecord.of(6, 5, 7))
    # 3*2^7 + 1 = 385 is composite
    assert "composite" in verify_record(FactorRecord.of(5, 3, 7))
    # 13 = 3*2^2 + 1 is prime but divides no Fermat number
    assert "does not reach" in verify_record(FactorRecord.of(0, 3, 2))


def test_record_k_must_be_odd():
    with pytest.raises(ValueError):
        FactorRecord.of(5, 10, 6)


def test_factor_search_rediscovers_641(config):
    report = run_factor_search(5, 5, k_max=5, m_max=7, config=config)
    assert [(r.n, r.k, r.m, r.p) for r in report.records] == [(5, 5, 7, 641)]
    assert all(r.verified for r in report.records)
    assert report.proth_primes >= 1


def test_factor_search_f5_f6(config):
    records = factor_search(5, 6, k_max=2**12, m_max=8, config=config)
    assert {(r.n, r.p) for r in records} == {(5, 641), (6, 274177)}
    assert all(verify_record(r, config) is None for r in records)


def test_factor_search_reports_self_divisors(config):
    report = run_factor_search(3, 3, k_max=1, m_max=8, config=config)
    assert report.records == []
    assert report.self_divisors == [3]


def test_factor_search_domain(config):
    with pytest.raises(DomainError):
        run_factor_search(6, 5, config=config)


def test_factor_search_trivial_range_is_empty(config):
    assert factor_search(0, 0, k_max=1, m_max=2, config=config) == []


def test_factor_search_grows_with_its_bounds(config):
    def keys(*args):
        return {(r.n, r.p) for r in factor_search(*args, config=config)}

    small = keys(5, 5, 64, 8)
    assert small == {(5, 641)}
    assert small <= keys(5, 6, 64, 8) <= keys(5, 6, 2**12, 8) <= keys(5, 6, 2**12, 9)
    assert (6, 274177) in keys(5, 6, 2**12, 9)


@pytest.mark.slow
def test_factor_search_reaches_list_a(config):
    records = factor_search(33, 50, k_max=2**16, m_max=60, config=config)
    found = {r.n for r in records}
    # 5*2^39+1 | F_36, 3*2^41+1 | F_38, 1985*2^44+1 | F_42
    assert {36, 38, 42} <= found
    assert found <= set(range(33, 51))
    assert all(r.verified and verify_record(r, config) is None for r in records)


def test_classify_lists_after_seed(ledger, config):
    db = FactorDatabase(ledger, config=config)
    db.seed()
    lists = classify_lists(db, 33, 50)
    assert lists.list_a == [36, 37, 38, 39, 42, 43]
    assert 33 in lists.list_b and 50 in lists.list_b
    assert sorted(lists.list_a + lists.list_b) == list(range(33, 51))
    assert lists.excluded == []


def test_classify_excludes_unverified(ledger, config):
    db = FactorDatabase(ledger, config=config)
    db.append([FactorRecord.of(36, 5, 39, verified=False)])
    lists = classify_lists(db, 33, 40)
    assert 36 in lists.list_b
    assert lists.excluded


def test_dubner_keller_bookkeeping(config):
    report = dubner_keller_stat(5, 1, 140, config)
    assert (7, 5) in report.hits
    assert report.sample_size == len(report.hits) + len(report.misses)
    assert report.dividing == len(report.hits)
    assert all(n <= m - 2 for m, n in report.hits)
    assert report.expected == pytest.approx(0.2)
    assert 0 < report.generic_probability < 1


def test_dubner_keller_k_one_finds_the_fermat_primes(config):
    report = dubner_keller_stat(1, 1, 16, config)
    assert report.fraction == 1.0
    assert report.hits == [(1, 0), (2, 1), (4, 2), (8, 3), (16, 4)]
    assert report.misses == [] and report.z_score is None


def test_dubner_keller_single_sample(config):
    report = dubner_keller_stat(5, 7, 7, config)
    assert report.sample_size == 1 and report.fraction == 1.0
    assert report.hits == [(7, 5)]


@pytest.mark.slow
def test_dubner_keller_desk_scale(config):
    for k in (3, 5, 9):
        report = dubner_keller_stat(k, 1, 400, config)
        assert report.sample_size > 0
        # statistical criterion: a 3-sigma miss is a prompt to look, reported rather than asserted
        assert report.within_3_sigma is not None
        assert 0 <= report.fraction <= 1


def test_dubner_keller_domain(config):
    with pytest.raises(DomainError):
        dubner_keller_stat(4, 1, 10, config)
