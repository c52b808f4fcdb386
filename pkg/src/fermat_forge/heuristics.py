"""
Probability models for the primality of F_n and the expectations built on them.

All sums run in mpmath at config.precision significant digits (plus guard
digits) and are reported as Decimals. Probabilities above 1 are clamped, the
raw value is kept alongside.
"""
import math
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from typing import Optional

import mpmath
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from fermat_forge.intervals import EXACT_PRODUCT_LIMIT, euler_product
from fermat_forge.ntkernel import (
    _require_odd_prime,
    compact,
    euler_phi,
    factorize,
    iter_prime_segments,
    lucas_lehmer,
    primes_between,
    probable_prime,
)
from fermat_forge.report import Report, rational, to_decimal
from fermat_forge.utils import DEFAULT_CONFIG, DomainError, ForgeConfig
from fermat_forge.utils.log import get_logger

log = get_logger(__name__)

BILLIONTH = Fraction(1, 10**9)
DEFAULT_TERMS = 64
# * exact 1/log F_n below this index; above it log1p(2^-(2^n)) is below any working precision
EXACT_LOG_MAX_N = 10


class ProbModel(str, Enum):
    NAIVE = "naive"
    SIEVE_ADJUSTED = "sieve_adjusted"
    HARDY_WRIGHT_TERM = "hardy_wright_term"
    FULLNESS_RATIO = "fullness_ratio"


class ExpectationModel(str, Enum):
    NAIVE = "naive"
    FULLNESS_RATIO = "fullness-ratio"


def _dps(config: ForgeConfig) -> int: return config.precision + 10


def fermat_log(n: int, config: ForgeConfig = DEFAULT_CONFIG) -> mpmath.mpf:
    """log F_n = 2^n log 2 + log1p(2^-(2^n)); F_n itself is never built for large n."""
    if n < 0: raise DomainError("Fermat index must be non-negative")
    with mpmath.workdps(_dps(config)):
        if n <= EXACT_LOG_MAX_N: return mpmath.log((mpmath.mpf(2) ** (1 << n)) + 1)
        return (1 << n) * mpmath.log(2) + mpmath.ldexp(1, -(1 << n))


# ? Single-index estimates ---------------------------------------------------------------

class ProbabilityEstimate(Report):
    """One model's probability that F_n is prime."""
    KIND = "probability"
    CSV_COLUMNS = ("model", "n", "value", "raw", "clamped", "exact")

    model: ProbModel
    n: int
    value: Decimal = Field(..., ge=0)
    raw: Decimal
    clamped: bool = False
    exact: Optional[str] = None  # * rational form, when the model is rational
    reference: Optional[Decimal] = None  # * closed-form companion (Mertens form for sieve_adjusted)
    parameters: dict[str, int | str] = Field(default_factory=dict)
    precision: int

    @model_validator(mode="after")
    def _clamped(self) -> "ProbabilityEstimate":
        if self.value > 1: raise ValueError("probabilities are clamped to [0, 1]")
        return self


def _estimate(model: ProbModel, n: int, raw: mpmath.mpf, config: ForgeConfig, **extra) -> ProbabilityEstimate:
    clamped = raw > 1
    if clamped: log.warning(f"{model.value} estimate for F_{n} is {mpmath.nstr(raw, 6)} > 1; clamped to 1")
    digits = config.precision
    return ProbabilityEstimate(
        model=model, n=n, value=to_decimal(min(raw, mpmath.mpf(1)), digits),
        raw=to_decimal(raw, digits), clamped=bool(clamped), precision=digits, **extra,
    )


def naive_raw(n: int, config: ForgeConfig = DEFAULT_CONFIG) -> mpmath.mpf:
    with mpmath.workdps(_dps(config)): return 2 / fermat_log(n, config)


def naive_prob(n: int, config: ForgeConfig = DEFAULT_CONFIG) -> ProbabilityEstimate:
    """2 / log F_n: the chance a random odd number of that size is prime."""
    return _estimate(ProbModel.NAIVE, n, naive_raw(n, config), config)


def sieve_adjusted_prob(n: int, B: int, config: ForgeConfig = DEFAULT_CONFIG) -> ProbabilityEstimate:
    """
    (2 / log F_n) * prod_(p <= B) (1 - 1/p)^(-1), conditioning on no prime divisor
    up to B. `reference` is the Mertens form 2 e^gamma log B / log F_n.
    """
    if B < 2: raise DomainError("the small-divisor bound B must be at least 2")
    with mpmath.workdps(_dps(config)):
        naive = naive_raw(n, config)
        raw = naive * euler_product(B, config)
        mertens = naive * mpmath.exp(mpmath.euler) * mpmath.log(B)
    return _estimate(
        ProbModel.SIEVE_ADJUSTED, n, raw, config,
        reference=to_decimal(mertens, config.precision),
        parameters={"B": B, "product": "mpf" if B <= EXACT_PRODUCT_LIMIT else "float64-log-sum"},
    )


def hardy_wright_term(n: int, A: float = 1.0, config: ForgeConfig = DEFAULT_CONFIG) -> ProbabilityEstimate:
    """A / log F_n, one term of the Hardy-Wright expectation."""
    if A < 0: raise DomainError("the Hardy-Wright constant A must be non-negative")
    with mpmath.workdps(_dps(config)): raw = mpmath.mpf(A) / fermat_log(n, config)
    return _estimate(ProbModel.HARDY_WRIGHT_TERM, n, raw, config, parameters={"A": str(A)})


def fullness_ratio(n: int, alpha: int = 2, config: ForgeConfig = DEFAULT_CONFIG) -> Fraction:
    """phi(2^(n+2)) / phi(2^(alpha n)), exactly."""
    if n < 2: raise DomainError("the fullness ratio needs n >= 2")
    if alpha < 1 or alpha * n < n + 2:
        raise DomainError(f"alpha*n = {alpha * n} is below n + 2 = {n + 2}: the ratio would exceed 1")
    config.check_bits("fullness ratio modulus", alpha * n + 1)
    return Fraction(euler_phi(1 << (n + 2), config), euler_phi(1 << (alpha * n), config))


def fullness_ratio_prob(n: int, alpha: int = 2, config: ForgeConfig = DEFAULT_CONFIG) -> ProbabilityEstimate:
    """
    Upper bound on P(F_n prime) from primes 1 mod 2^(alpha n) among primes 1 mod 2^(n+2).
    alpha = 2 gives 4 / 2^n. Larger alpha gives a smaller bound but needs a wider window.
    """
    ratio = fullness_ratio(n, alpha, config)
    with mpmath.workdps(_dps(config)): raw = mpmath.mpf(ratio.numerator) / ratio.denominator
    return _estimate(
        ProbModel.FULLNESS_RATIO, n, raw, config, exact=rational(ratio),
        parameters={"alpha": alpha, "q": f"2^{alpha * n}", "K": f"2^{n + 2}"},
    )


# ? Expectations ---------------------------------------------------------------------

class ExpectationReport(Report):
    KIND = "expectation"
    CSV_COLUMNS = ("model", "n_lo", "n_hi", "terms", "partial_sum", "closed_form", "closed_form_value", "below_threshold")

    model: str
    n_lo: int
    n_hi: Optional[int] = None  # * None: summed until terms fall below the working precision
    terms: int
    partial_sum: Decimal
    closed_form: Optional[str] = None  # * exact rational when the tail has one
    closed_form_value: Optional[Decimal] = None
    closed_form_is_bound: bool = False
    relative_error: Optional[Decimal] = None
    bounds: dict[str, Decimal] = Field(default_factory=dict)
    threshold: Optional[Decimal] = None
    below_threshold: Optional[bool] = None
    note: Optional[str] = None
    precision: int

    @model_validator(mode="after")
    def _bounded(self) -> "ExpectationReport":
        if self.closed_form_is_bound and self.closed_form_value is not None and self.partial_sum > self.closed_form_value:
            raise ValueError("partial sum exceeds its closed-form upper bound")
        return self


def _tail_terms(config: ForgeConfig) -> int:
    """Terms after which 2^-n has dropped below the working precision, relative to the first."""
    return math.ceil(_dps(config) * math.log2(10)) + 2


def hardy_wright_expectation(A: float = 1.0, n_lo: int = 0, n_hi: Optional[int] = None, config: ForgeConfig = DEFAULT_CONFIG) -> ExpectationReport:
    """
    A * sum 1/log F_n over [n_lo, n_hi], against the chain of bounds
    (A / log 2) sum 2^-n and 3A.
    """
    if A < 0: raise DomainError("the Hardy-Wright constant A must be non-negative")
    if n_lo < 0 or (n_hi is not None and n_hi < n_lo): raise DomainError(f"bad index range [{n_lo}, {n_hi}]")
    top = n_hi if n_hi is not None else n_lo + _tail_terms(config)
    digits = config.precision
    with mpmath.workdps(_dps(config)):
        total = mpmath.fsum(1 / fermat_log(n, config) for n in range(n_lo, top + 1)) * A
        geometric = mpmath.mpf(A) / mpmath.log(2) * mpmath.ldexp(1, 1 - n_lo)
        if n_hi is not None: geometric *= 1 - mpmath.ldexp(1, n_lo - n_hi - 1)
    bound = 3 * A
    if A and total >= bound: log.error(f"Hardy-Wright partial sum {mpmath.nstr(total, 10)} reached 3A")
    return ExpectationReport(
        model="hardy-wright", n_lo=n_lo, n_hi=n_hi, terms=top - n_lo + 1,
        partial_sum=to_decimal(total, digits),
        closed_form_value=to_decimal(geometric, digits), closed_form_is_bound=True,
        bounds={"A/log2*sum(2^-n)": to_decimal(geometric, digits), "3A": to_decimal(bound, digits)},
        threshold=to_decimal(bound, digits), below_threshold=bool(total < bound) if A else True,
        note="A is a free constant", precision=digits,
    )


def expected_new_fermat_primes(
    n_min: int = 33,
    model: ExpectationModel = ExpectationModel.FULLNESS_RATIO,
    terms: int = DEFAULT_TERMS,
    config: ForgeConfig = DEFAULT_CONFIG,
) -> ExpectationReport:
    """
    Expected number of Fermat primes F_n with n >= n_min. Under the fullness-ratio
    model the tail sum 4/2^n is exactly 4/2^(n_min - 1); the first `terms` terms are
    summed as a check. Compared against one billionth.
    """
    if n_min < 2: raise DomainError("n_min must be at least 2")
    if terms < 1: raise DomainError("terms must be at least 1")
    model = ExpectationModel(model)
    digits = config.precision
    match model:
        case ExpectationModel.FULLNESS_RATIO:
            closed = Fraction(4, 1 << (n_min - 1))
            partial = sum((fullness_ratio(n, 2, config) for n in range(n_min, n_min + terms)), Fraction(0))
            relative = (closed - partial) / closed
            return ExpectationReport(
                model=model.value, n_lo=n_min, n_hi=None, terms=terms,
                partial_sum=to_decimal(partial, digits),
                closed_form=rational(closed), closed_form_value=to_decimal(closed, digits), closed_form_is_bound=True,
                relative_error=to_decimal(relative, digits),
                threshold=Decimal("1e-9"), below_threshold=closed < BILLIONTH,
                note=f"4/2^{n_min - 1} {'<' if closed < BILLIONTH else '>='} 1e-9", precision=digits,
            )
        case ExpectationModel.NAIVE:
            top = n_min + max(terms, _tail_terms(config))
            with mpmath.workdps(_dps(config)):
                partial = mpmath.fsum(naive_raw(n, config) for n in range(n_min, top))
                bound = 2 / mpmath.log(2) * mpmath.ldexp(1, 1 - n_min)
                below = partial < mpmath.mpf(10) ** -9
            return ExpectationReport(
                model=model.value, n_lo=n_min, n_hi=None, terms=top - n_min,
                partial_sum=to_decimal(partial, digits),
                closed_form_value=to_decimal(bound, digits), closed_form_is_bound=True,
                threshold=Decimal("1e-9"), below_threshold=bool(below),
                note="closed form is the (2/log 2) sum 2^-n upper bound", precision=digits,
            )


# ? Interval-size requirements ---------------------------------------------------------

class IntervalRequirement(Report):
    """How wide [x - r, x + r] must be for equidistribution and for uniformity over q = (log x)^delta."""
    KIND = "interval_requirement"
    CSV_COLUMNS = ("log_x", "delta", "epsilon", "r_equidistribution", "r_uniformity", "selberg_satisfied", "lemma_satisfied")

    log_x: Decimal
    fermat_index: Optional[int] = None
    delta: float
    epsilon: float
    multiplier: float
    r_equidistribution: Decimal  # * (log x)^(1 + delta + epsilon)
    r_uniformity: Decimal  # * (log x)^(2 + delta + epsilon)
    exponent_gap: Decimal  # * r_uniformity / r_equidistribution = log x
    selberg_threshold: Decimal  # * multiplier * log^2 x
    selberg_satisfied: bool
    lemma_threshold: Decimal  # * multiplier * phi(q) log phi(q) * log x, with phi(q) <= q = (log x)^delta
    lemma_satisfied: bool
    alpha: Optional[int] = None
    q_admissible: Optional[bool] = None  # * phi(2^(alpha n)) = o(x / log^2 x), compared in log scale
    precision: int

    @model_validator(mode="after")
    def _gap(self) -> "IntervalRequirement":
        if self.r_uniformity < self.r_equidistribution: raise ValueError("uniformity needs the wider window")
        return self


def interval_requirement(
    x: Optional[int] = None,
    delta: float = 2.0,
    epsilon: float = 0.1,
    multiplier: float = 100.0,
    fermat_index: Optional[int] = None,
    alpha: int = 2,
    config: ForgeConfig = DEFAULT_CONFIG,
) -> IntervalRequirement:
    """
    Thresholds r > (log x)^(1 + delta + epsilon) (equidistribution) and
    r > (log x)^(2 + delta + epsilon) (uniformity). Pass `fermat_index` to take
    x = F_n without materializing it; delta = 2 then gives the (log x)^(4 + epsilon) window.
    """
    if (x is None) == (fermat_index is None): raise DomainError("give exactly one of x and fermat_index")
    if x is not None and x < 3: raise DomainError("x must be at least 3")
    if delta < 1: raise DomainError("delta must be at least 1")
    if epsilon < 0: raise DomainError("epsilon must be non-negative")
    digits = config.precision
    with mpmath.workdps(_dps(config)):
        L = fermat_log(fermat_index, config) if fermat_index is not None else mpmath.log(x)
        r_eq = L ** (1 + mpmath.mpf(delta) + epsilon)
        r_uni = L ** (2 + mpmath.mpf(delta) + epsilon)
        selberg = multiplier * L**2
        q = L ** mpmath.mpf(delta)
        lemma = multiplier * q * mpmath.log(q) * L
        admissible = None
        if fermat_index is not None:
            admissible = bool((alpha * fermat_index - 1) * mpmath.log(2) < L - 2 * mpmath.log(L))
        return IntervalRequirement(
            log_x=to_decimal(L, digits), fermat_index=fermat_index, delta=delta, epsilon=epsilon, multiplier=multiplier,
            r_equidistribution=to_decimal(r_eq, digits), r_uniformity=to_decimal(r_uni, digits),
            exponent_gap=to_decimal(r_uni / r_eq, digits),
            selberg_threshold=to_decimal(selberg, digits), selberg_satisfied=bool(r_uni > selberg),
            lemma_threshold=to_decimal(lemma, digits), lemma_satisfied=bool(r_uni > lemma),
            alpha=alpha if fermat_index is not None else None, q_admissible=admissible, precision=digits,
        )


# ? Mersenne expectations --------------------------------------------------------------

class HarmonicReport(Report):
    KIND = "mersenne_harmonic"
    CSV_COLUMNS = ("X", "partial_sum", "reference", "relative_error")

    X: int
    partial_sum: Decimal
    reference: Optional[Decimal] = None  # * log log X + Meissel-Mertens constant
    relative_error: Optional[Decimal] = None
    precision: int


def prime_harmonic(X: int, config: ForgeConfig = DEFAULT_CONFIG) -> mpmath.mpf:
    """sum 1/p over primes p <= X."""
    config.check_sieve("prime harmonic sum", X)
    with mpmath.workdps(_dps(config)):
        if X <= EXACT_PRODUCT_LIMIT:
            return mpmath.fsum(mpmath.mpf(1) / p for seg in iter_prime_segments(2, X) for p in seg.tolist())
        return mpmath.mpf(math.fsum(math.fsum((1.0 / seg.astype(np.float64)).tolist()) for seg in iter_prime_segments(2, X)))


def mersenne_harmonic(X: int, config: ForgeConfig = DEFAULT_CONFIG) -> HarmonicReport:
    """sum 1/p for p <= X, the divergent sum behind the naive count of Mersenne primes."""
    if X < 0: raise DomainError("X must be non-negative")
    total = prime_harmonic(X, config)
    digits = config.precision
    with mpmath.workdps(_dps(config)):
        reference = mpmath.log(mpmath.log(X)) + mpmath.mertens if X >= 3 else None
        error = abs(total / reference - 1) if reference else None
    return HarmonicReport(
        X=X, partial_sum=to_decimal(total, digits),
        reference=None if reference is None else to_decimal(reference, digits),
        relative_error=None if error is None else to_decimal(error, digits), precision=digits,
    )


class MersenneFullness(Report):
    """M_p is p-full: every prime divisor is 1 mod 2p."""
    KIND = "mersenne_fullness"
    CSV_COLUMNS = ("p", "factors", "complete", "p_full", "two_p_full")

    p: int
    factors: list[int | str]
    cofactor: int | str = 1
    complete: bool
    p_full: bool
    two_p_full: bool


def mersenne_fullness(p: int, config: ForgeConfig = DEFAULT_CONFIG) -> MersenneFullness:
    _require_odd_prime(p, "mersenne_fullness", config)
    config.check_bits(f"M_{p}", p)
    f = factorize((1 << p) - 1, config)
    if not f.complete: log.warning(f"M_{p} only partly factored; fullness judged on the found primes")
    primes = f.primes()
    return MersenneFullness(
        p=p, factors=[compact(q) for q in primes], cofactor=compact(f.cofactor), complete=f.complete,
        p_full=all(q % p == 1 for q in primes), two_p_full=all(q % (2 * p) == 1 for q in primes),
    )


class DoublingRow(BaseModel):
    X: int
    count: int
    partial_sum: Decimal
    harmonic_sum: Decimal  # * sum 1/p over all primes <= X, for contrast
    shape_ratio: Optional[float] = None  # * count / (X / log^2 X)

    model_config = ConfigDict(frozen=True)


class SpecialMersenneReport(Report):
    """Primes p <= X with ap + b also prime, the 1/(ap + b) expectation and Lucas-Lehmer verdicts."""
    KIND = "special_mersenne"
    CSV_COLUMNS = ("X", "count", "partial_sum", "harmonic_sum", "shape_ratio")

    a: int
    b: int
    X: int
    census: list[int]
    excluded: list[int] = Field(default_factory=list)  # * primes dividing b
    count: int
    shape_ratio: Optional[float] = None
    expectation: ExpectationReport
    doubling: list[DoublingRow] = Field(default_factory=list)
    ll_limit: int
    mersenne_primes: list[int] = Field(default_factory=list)
    note: str = "the CRT residue model is unformalized; only the 1/(ap+b) bound is evaluated"

    def csv_rows(self):
        return [row.model_dump(mode="json") for row in self.doubling]


def _shape(count: int, X: int) -> Optional[float]:
    return count / (X / math.log(X) ** 2) if X >= 3 else None


def special_mersenne_expectation(a: int, b: int, X: int, ll_limit: int = 2000, config: ForgeConfig = DEFAULT_CONFIG) -> SpecialMersenneReport:
    """
    Census of primes p <= X (p not dividing b) with ap + b prime, the partial sum of
    1/(ap + b) over it, and the same at X, X/2, X/4, ... down to 16. For census
    members p <= ll_limit, M_p is tested (Lucas-Lehmer for odd p).
    """
    if a == 0: raise DomainError("a = 0 makes ap + b constant")
    if X < 2: raise DomainError("X must be at least 2")
    top = a * X + b if a > 0 else b + 2 * a
    config.check_sieve("special Mersenne census", max(X, abs(top)))

    primes = primes_between(2, X, config)
    excluded = [int(p) for p in primes if b and b % int(p) == 0]
    values = a * primes + b
    is_p = np.zeros(values.size, dtype=bool)
    positive = values >= 2
    if positive.any():
        is_p[positive] = np.isin(values[positive], primes_between(2, int(values[positive].max()), config))
    is_p &= ~np.isin(primes, excluded)
    census = primes[is_p].tolist()
    log.info(f"{len(census)} primes p <= {X} with {a}p{b:+d} prime")

    digits = config.precision
    with mpmath.workdps(_dps(config)):
        terms = [mpmath.mpf(1) / (a * p + b) for p in census]
        partial = mpmath.fsum(terms)
        doubling = []
        bound = X
        while bound >= 16 or bound == X:
            members = [t for p, t in zip(census, terms) if p <= bound]
            doubling.append(DoublingRow(
                X=bound, count=len(members), partial_sum=to_decimal(mpmath.fsum(members), digits),
                harmonic_sum=to_decimal(prime_harmonic(bound, config), digits), shape_ratio=_shape(len(members), bound),
            ))
            bound //= 2
    doubling.reverse()

    mersenne = []
    for p in census:
        if p > ll_limit: break
        verdict = probable_prime(3, config=config) if p == 2 else lucas_lehmer(p, config)
        if verdict.is_prime: mersenne.append(p)

    expectation = ExpectationReport(
        model=f"special-mersenne({a},{b})", n_lo=2, n_hi=X, terms=len(census),
        partial_sum=to_decimal(partial, digits), note="sum 1/(ap+b) over the census", precision=digits,
    )
    return SpecialMersenneReport(
        a=a, b=b, X=X, census=census, excluded=excluded, count=len(census), shape_ratio=_shape(len(census), X),
        expectation=expectation, doubling=doubling, ll_limit=ll_limit, mersenne_primes=mersenne,
    )
