"""
Interval statistics: prime counts in windows and progressions, K-full
counts, Mertens products, Selberg windows, Chebyshev psi, the second moment
I(x, h, q) and the balls-in-cups equidistribution simulation.
"""
import math
from decimal import Decimal
from fractions import Fraction
from math import gcd, isqrt
from typing import Iterator, Optional

import mpmath
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from fermat_forge.ntkernel import (
    SEGMENT,
    _small_sieve,
    count_primes_between,
    factorize,
    iter_prime_segments,
    primes_between,
)
from fermat_forge.report import DEFAULT_TOLERANCE, RNG_ALGORITHM, Report, rational, to_decimal
from fermat_forge.utils import DEFAULT_CONFIG, DomainError, ForgeConfig
from fermat_forge.utils.log import get_logger

log = get_logger(__name__)

DEFAULT_MULTIPLIER = 100
DEFAULT_EXCEPTIONAL_FRACTION = 0.1
# * above this bound the Euler product is accumulated in float64 logs instead of mpf
EXACT_PRODUCT_LIMIT = 10**7


class IntervalSpec(BaseModel):
    """The centered window [x - r, x + r]."""
    x: int
    r: int = Field(..., ge=0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _inside(self) -> "IntervalSpec":
        if self.r >= self.x: raise ValueError(f"half-width r={self.r} must be below the center x={self.x}")
        return self

    @classmethod
    def between(cls, lo: int, hi: int) -> "IntervalSpec":
        if (lo + hi) % 2: raise DomainError(f"[{lo}, {hi}] has no integer center")
        return cls(x=(lo + hi) // 2, r=(hi - lo) // 2)

    @property
    def lo(self) -> int: return self.x - self.r

    @property
    def hi(self) -> int: return self.x + self.r


class CongruenceClass(BaseModel):
    """Residue class a (mod q)."""
    q: int = Field(..., ge=1)
    a: int = Field(..., ge=0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _reduced(self) -> "CongruenceClass":
        if self.a >= self.q: raise ValueError(f"a={self.a} not reduced mod q={self.q}")
        return self

    @property
    def coprime(self) -> bool: return gcd(self.a, self.q) == 1


def coprime_residues(q: int) -> list[int]:
    return [a for a in range(q) if gcd(a, q) == 1]


# ? Prime counts ------------------------------------------------------------------------

def count_primes(I: IntervalSpec, config: ForgeConfig = DEFAULT_CONFIG) -> int:
    return count_primes_between(I.lo, I.hi, config)


def count_primes_in_class(I: IntervalSpec, c: CongruenceClass, config: ForgeConfig = DEFAULT_CONFIG) -> int:
    config.check_sieve("prime count", I.hi)
    return sum(int(np.count_nonzero(seg % c.q == c.a)) for seg in iter_prime_segments(I.lo, I.hi))


# ? K-full numbers -----------------------------------------------------------------------

def is_k_full(n: int, K: int, config: ForgeConfig = DEFAULT_CONFIG) -> bool:
    """Every prime divisor of n is 1 mod K. 1 is K-full (no prime divisors)."""
    if n < 1 or K < 1: raise DomainError("is_k_full needs n >= 1 and K >= 1")
    primes = factorize(n, config).require_complete().primes()
    return all((p - 1) % K == 0 for p in primes)


def _k_full_segment(lo: int, hi: int, K: int) -> int:
    """Count K-full integers in [lo, hi] (lo >= 1) with a factor sieve."""
    rest = np.arange(lo, hi + 1, dtype=np.int64)
    ok = np.ones(rest.size, dtype=bool)
    for p in _small_sieve(isqrt(hi)).tolist():
        if (p - 1) % K:
            # ^ one bad prime settles it, no need to divide it out
            ok[(-lo) % p::p] = False
            continue
        pe = p
        while pe <= hi:
            rest[(-lo) % pe::pe] //= p
            pe *= p
    # * what is left is 1 or a single prime above sqrt(hi)
    ok &= (rest == 1) | ((rest - 1) % K == 0)
    return int(np.count_nonzero(ok))


def count_k_full(I: IntervalSpec, K: int, config: ForgeConfig = DEFAULT_CONFIG) -> int:
    if K < 1: raise DomainError("K must be at least 1")
    config.check_sieve("K-full count", I.hi)
    total = 0
    lo = I.lo
    while lo <= I.hi:
        top = min(I.hi, lo + SEGMENT - 1)
        total += _k_full_segment(lo, top, K)
        lo = top + 1
    return total


class DensityReport(Report):
    KIND = "kfull_density"
    CSV_COLUMNS = ("x", "r", "K", "count_k_full", "count_primes_1_mod_K", "ratio")

    x: int
    r: int
    K: int
    count_k_full: int
    count_primes_1_mod_K: int
    ratio: Optional[float] = None  # * None when no prime 1 mod K lies in the window
    ratio_exact: Optional[str] = None

    @model_validator(mode="after")
    def _primes_are_k_full(self) -> "DensityReport":
        if self.count_primes_1_mod_K > self.count_k_full:
            raise ValueError("primes 1 mod K are K-full, so they cannot outnumber the K-full integers")
        return self


def density_report(I: IntervalSpec, K: int, config: ForgeConfig = DEFAULT_CONFIG) -> DensityReport:
    full = count_k_full(I, K, config)
    primes = count_primes_in_class(I, CongruenceClass(q=K, a=1 % K), config)
    ratio = Fraction(full, primes) if primes else None
    return DensityReport(
        x=I.x, r=I.r, K=K, count_k_full=full, count_primes_1_mod_K=primes,
        ratio=None if ratio is None else float(ratio),
        ratio_exact=None if ratio is None else rational(ratio),
    )


def kfull_ratio_experiment(x: int, K: int, r_schedule: list[int], config: ForgeConfig = DEFAULT_CONFIG) -> list[DensityReport]:
    """K-full count over primes 1 mod K on [x - r, x + r] for each r of a descending schedule."""
    if x < 16: raise DomainError("x must be at least 16 for log log x to be meaningful")
    if K < math.log(math.log(x)): raise DomainError(f"K={K} is below log log x = {math.log(math.log(x)):.3f}")
    if any(b > a for a, b in zip(r_schedule, r_schedule[1:])): raise DomainError("r_schedule must be descending")
    reports = []
    for r in r_schedule:
        report = density_report(IntervalSpec(x=x, r=r), K, config)
        if report.ratio is None: log.warning(f"no primes 1 mod {K} in [{x - r}, {x + r}]: ratio undefined")
        reports.append(report)
    return reports


# ? Mertens product ----------------------------------------------------------------------

class MertensReport(Report):
    KIND = "mertens"
    CSV_COLUMNS = ("B", "product", "reference", "ratio", "method")

    B: int
    product: Decimal
    reference: Optional[Decimal] = None  # * e^gamma * log B
    ratio: Optional[Decimal] = None
    method: str
    precision: int


def euler_product(B: int, config: ForgeConfig = DEFAULT_CONFIG) -> mpmath.mpf:
    """prod_(p <= B) (1 - 1/p)^(-1) as an mpf at config.precision digits."""
    config.check_sieve("Euler product", B)
    with mpmath.workdps(config.precision + 10):
        if B <= EXACT_PRODUCT_LIMIT:
            product = mpmath.mpf(1)
            for seg in iter_prime_segments(2, B):
                for p in seg.tolist(): product = product * p / (p - 1)
            return +product
        logs = [math.fsum((-np.log1p(-1.0 / seg.astype(np.float64))).tolist()) for seg in iter_prime_segments(2, B)]
        return mpmath.exp(mpmath.mpf(math.fsum(logs)))


def mertens_product(B: int, config: ForgeConfig = DEFAULT_CONFIG) -> MertensReport:
    product = euler_product(B, config)
    with mpmath.workdps(config.precision + 10):
        reference = mpmath.exp(mpmath.euler) * mpmath.log(B) if B >= 2 else None
        ratio = product / reference if reference else None
    digits = config.precision
    return MertensReport(
        B=B, product=to_decimal(product, digits),
        reference=None if reference is None else to_decimal(reference, digits),
        ratio=None if ratio is None else to_decimal(ratio, digits),
        method="mpf-product" if B <= EXACT_PRODUCT_LIMIT else "float64-log-sum",
        precision=digits,
    )


# ? Selberg windows ----------------------------------------------------------------------

class SelbergReport(Report):
    KIND = "selberg_window"
    CSV_COLUMNS = ("t", "count", "expected", "passed")

    x: int
    y: int
    samples: int
    seed: int
    rng: str = RNG_ALGORITHM
    epsilon: float
    multiplier: float
    threshold: float  # * multiplier * log^2 x
    meets_threshold: bool
    pass_fraction: float
    windows: list[tuple[int, int, float, bool]] = Field(default_factory=list)

    def csv_rows(self):
        return [dict(zip(self.CSV_COLUMNS, w)) for w in self.windows]


def selberg_window_check(
    x: int,
    y: int,
    samples: int = 200,
    seed: int = 0,
    epsilon: float = DEFAULT_TOLERANCE,
    multiplier: float = DEFAULT_MULTIPLIER,
    config: ForgeConfig = DEFAULT_CONFIG,
) -> SelbergReport:
    """
    Share of windows [t, t + y], t uniform in [x, 2x), whose prime count is within
    epsilon of y / log t. With y >= x the single window [2, x] is compared to x / log x.
    """
    if x < 3 or y < 1 or samples < 1: raise DomainError("need x >= 3, y >= 1, samples >= 1")
    threshold = multiplier * math.log(x) ** 2
    windows = []
    match y >= x:
        case True:
            config.check_sieve("Selberg window", x)
            count, expected = count_primes_between(2, x, config), x / math.log(x)
            windows.append((2, count, expected, abs(count - expected) <= epsilon * expected))
        case False:
            config.check_sieve("Selberg window", 2 * x + y)
            rng = np.random.Generator(np.random.PCG64(seed))
            for t in rng.integers(x, 2 * x, size=samples).tolist():
                count, expected = count_primes_between(t, t + y, config), y / math.log(t)
                windows.append((t, count, expected, abs(count - expected) <= epsilon * expected))
    if y < threshold: log.info(f"y={y} is below the window threshold {threshold:.1f}; reporting only")
    return SelbergReport(
        x=x, y=y, samples=len(windows), seed=seed, epsilon=epsilon, multiplier=multiplier,
        threshold=threshold, meets_threshold=y >= threshold,
        pass_fraction=sum(w[3] for w in windows) / len(windows), windows=windows,
    )


# ? Chebyshev psi and the second moment --------------------------------------------------

def _prime_powers(limit: int, config: ForgeConfig) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """(prime powers p^e <= limit, log p) grouped by exponent e."""
    primes = primes_between(2, limit, config)
    e, powers = 1, primes.copy()
    while primes.size:
        yield powers, np.log(primes.astype(np.float64))
        e += 1
        primes = primes[primes <= int(round(limit ** (1 / e))) + 1]
        powers = primes ** e
        keep = powers <= limit
        primes, powers = primes[keep], powers[keep]


def chebyshev_psi(y: int, c: CongruenceClass = CongruenceClass(q=1, a=0), config: ForgeConfig = DEFAULT_CONFIG) -> float:
    """psi(y; q, a): sum of Lambda(n) over n <= y with n = a (mod q)."""
    if y < 2: return 0.0
    config.check_sieve("psi", y)
    parts = []
    for powers, logs in _prime_powers(y, config):
        parts.extend(logs[powers % c.q == c.a].tolist())
    return math.fsum(parts)


def von_mangoldt(limit: int, config: ForgeConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Lambda(n) for 0 <= n <= limit."""
    lam = np.zeros(limit + 1, dtype=np.float64)
    for powers, logs in _prime_powers(limit, config): lam[powers] = logs
    return lam


class SecondMomentReport(Report):
    KIND = "second_moment"
    CSV_COLUMNS = ("a", "I", "fail_fraction", "exceptional")

    x: int
    h: int
    q: int
    step: int
    value: float
    bound_ratio: Optional[float] = None  # * value / (h x log^2(qx))
    per_class: dict[int, float]
    fail_fractions: dict[int, float]
    exceptional_classes: list[int]
    tolerance: float
    exceptional_fraction: float
    gy_lower_bound: Optional[float] = None  # * 1/2 x h log(xq/h^3), summed over classes
    exceptional_reference: Optional[float] = None  # * phi(q)^2 log^2 x / h

    @model_validator(mode="after")
    def _sums(self) -> "SecondMomentReport":
        if any(v < 0 for v in self.per_class.values()): raise ValueError("per-class moments are squares")
        return self

    def csv_rows(self):
        return [
            {"a": a, "I": v, "fail_fraction": self.fail_fractions[a], "exceptional": a in self.exceptional_classes}
            for a, v in self.per_class.items()
        ]


def second_moment(
    x: int,
    h: int,
    q: int,
    step: Optional[int] = None,
    tolerance: float = DEFAULT_TOLERANCE,
    exceptional_fraction: float = DEFAULT_EXCEPTIONAL_FRACTION,
    config: ForgeConfig = DEFAULT_CONFIG,
) -> SecondMomentReport:
    """
    I(x, h, q) = sum over a coprime to q of the integral over [x, 2x] of
    (psi(y + h; q, a) - psi(y; q, a) - h/phi(q))^2, by a midpoint Riemann sum.
    psi is a step function, so step = 1 is exact. A class is exceptional when its
    increment misses h/phi(q) by more than `tolerance` (relative) at more than
    `exceptional_fraction` of the sample points.
    """
    if x < 2 or h < 0 or q < 1: raise DomainError("need x >= 2, h >= 0, q >= 1")
    classes = coprime_residues(q)
    phi = len(classes)
    step = max(1, h // 100) if step is None else step
    if h == 0:
        zeros = {a: 0.0 for a in classes}
        return SecondMomentReport(
            x=x, h=h, q=q, step=step, value=0.0, per_class=zeros, fail_fractions=dict(zeros),
            exceptional_classes=[], tolerance=tolerance, exceptional_fraction=exceptional_fraction,
        )
    if step < 1 or step > h: raise DomainError(f"integration step {step} must lie in [1, h={h}]")
    config.check_sieve("second moment", 2 * x + h)

    lam = von_mangoldt(2 * x + h, config)
    residues = np.arange(lam.size, dtype=np.int64) % q
    points = x // step
    floor_y = x + np.arange(points, dtype=np.int64) * step + step // 2
    mean = h / phi

    per_class, fail = {}, {}
    for a in classes:
        psi = np.cumsum(np.where(residues == a, lam, 0.0))
        dev = psi[floor_y + h] - psi[floor_y] - mean
        per_class[a] = math.fsum((dev * dev).tolist()) * step
        fail[a] = float(np.count_nonzero(np.abs(dev) > tolerance * mean)) / points
    value = math.fsum(per_class.values())
    log_qx = math.log(q * x)
    return SecondMomentReport(
        x=x, h=h, q=q, step=step, value=value,
        bound_ratio=value / (h * x * log_qx**2),
        per_class=per_class, fail_fractions=fail,
        exceptional_classes=[a for a in classes if fail[a] > exceptional_fraction],
        tolerance=tolerance, exceptional_fraction=exceptional_fraction,
        gy_lower_bound=0.5 * x * h * math.log(x * q / h**3),
        exceptional_reference=phi**2 * math.log(x) ** 2 / h,
    )


# ? Equidistribution lemma ---------------------------------------------------------------

class BallsCupsReport(Report):
    KIND = "balls_cups"
    CSV_COLUMNS = ("trial", "max_load", "min_load", "max_relative_deviation", "min_relative_deviation", "passed")

    B: int
    C: int
    trials: int
    seed: int
    rng: str = RNG_ALGORITHM
    epsilon: float
    lemma_ratio: Optional[float] = None  # * B / (C log C)
    max_relative_deviation: list[float]
    min_relative_deviation: list[float]
    max_load: list[int]
    min_load: list[int]
    epsilon_pass_fraction: float

    def csv_rows(self):
        return [
            {
                "trial": i, "max_load": self.max_load[i], "min_load": self.min_load[i],
                "max_relative_deviation": self.max_relative_deviation[i],
                "min_relative_deviation": self.min_relative_deviation[i],
                "passed": self.min_relative_deviation[i] >= -self.epsilon and self.max_relative_deviation[i] <= self.epsilon,
            }
            for i in range(self.trials)
        ]


def balls_in_cups(B: int, C: int, trials: int = 1000, seed: int = 0, epsilon: float = 0.5) -> BallsCupsReport:
    """
    Throw B balls into C cups uniformly, `trials` times. Trial i draws from the
    i-th child of SeedSequence(seed), so a trial's loads do not depend on how
    many trials run or on epsilon.
    """
    if B < 0 or C < 1 or trials < 1: raise DomainError("need B >= 0, C >= 1, trials >= 1")
    mean = B / C
    children = np.random.SeedSequence(seed).spawn(trials)
    max_dev, min_dev, max_load, min_load = [], [], [], []
    passed = 0
    for child in children:
        loads = np.random.Generator(np.random.PCG64(child)).multinomial(B, [1.0 / C] * C)
        hi, lo = int(loads.max()), int(loads.min())
        up, down = ((hi - mean) / mean, (lo - mean) / mean) if mean else (0.0, 0.0)
        max_dev.append(up)
        min_dev.append(down)
        max_load.append(hi)
        min_load.append(lo)
        passed += (1 - epsilon) * mean <= lo and hi <= (1 + epsilon) * mean
    return BallsCupsReport(
        B=B, C=C, trials=trials, seed=seed, epsilon=epsilon,
        lemma_ratio=B / (C * math.log(C)) if C > 1 else None,
        max_relative_deviation=max_dev, min_relative_deviation=min_dev,
        max_load=max_load, min_load=min_load, epsilon_pass_fraction=passed / trials,
    )
