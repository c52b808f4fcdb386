"""
Fermat-number identities, the repeated-squaring factor search over Proth
primes, list (A)/(B) classification and the Dubner-Keller divisor statistic.
"""
from concurrent.futures import ProcessPoolExecutor
from enum import Enum
from math import sqrt
from typing import TYPE_CHECKING, Optional

import gmpy2
import numpy as np
from gmpy2 import mpz
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from fermat_forge.ntkernel import (
    ProthCandidate,
    Status,
    _small_sieve,
    compact,
    probable_prime,
    proth_test,
    residue_trace,
)
from fermat_forge.report import Report
from fermat_forge.utils import DEFAULT_CONFIG, DomainError, ForgeConfig
from fermat_forge.utils.log import get_logger

if TYPE_CHECKING:
    from fermat_forge.db import FactorDatabase

log = get_logger(__name__)

# * odd primes used to pre-sieve k*2^m + 1 before any Proth test
WHEEL_LIMIT = 1000
DEFAULT_K_MAX = 2**16
DEFAULT_M_MAX = 64
DIRECT_CHECK_MAX_N = 14


class Fullness(str, Enum):
    """Which divisor theorem to apply: Euler (2^(n+1)) or Lucas (2^(n+2))."""
    EULER = "euler"
    LUCAS = "lucas"

    def modulus(self, n: int) -> int:
        return 1 << (n + 1 if self == Fullness.EULER else n + 2)


class FermatNumber(BaseModel):
    """F_n = 2^(2^n) + 1, materialized only on request and within the bit budget."""
    n: int = Field(..., ge=0)

    model_config = ConfigDict(frozen=True)

    @property
    def bits(self) -> int: return (1 << self.n) + 1

    def value(self, config: ForgeConfig = DEFAULT_CONFIG) -> int:
        config.check_bits(str(self), 1 << self.n)
        return (1 << (1 << self.n)) + 1

    def __str__(self) -> str: return f"F_{self.n}"


class FactorRecord(BaseModel):
    """A prime p = k*2^m + 1 dividing F_n, with how it was found."""
    n: int = Field(..., ge=0)
    k: int = Field(..., ge=1)
    m: int = Field(..., ge=1)
    p: int
    method: str = "proth-trace"
    verified: bool = False
    timestamp: Optional[str] = None

    model_config = ConfigDict(frozen=True)

    @field_validator("k")
    @classmethod
    def _odd(cls, k: int) -> int:
        if k % 2 == 0: raise DomainError(f"k={k} must be odd")
        return k

    @field_serializer("p")
    def _ser_p(self, p: int) -> str: return str(p)

    @property
    def key(self) -> tuple[int, int]: return self.n, self.p

    @classmethod
    def of(cls, n: int, k: int, m: int, **kwargs) -> "FactorRecord":
        return cls(n=n, k=k, m=m, p=k * (1 << m) + 1, **kwargs)


class FermaTPrime(BaseModel):
    n: int
    value: int

    model_config = ConfigDict(frozen=True)


# ? Identities ------------------------------------------------------------------------

def fermat_number(n: int, config: ForgeConfig = DEFAULT_CONFIG) -> int:
    if n < 0: raise DomainError("Fermat index must be non-negative")
    return FermatNumber(n=n).value(config)


def ferma_t_primes(limit: int = 32, config: ForgeConfig = DEFAULT_CONFIG) -> list[FermaTPrime]:
    """Primes of the form 2^n + 1 for 0 <= n <= limit (2 counts, at n = 0)."""
    found = []
    for n in range(limit + 1):
        # ^ 2^n + 1 has the factor 2^(n/d) + 1 for every odd d > 1 dividing n
        if n > 0 and n & (n - 1): continue
        config.check_bits(f"2^{n}+1", n + 1)
        v = (1 << n) + 1
        if probable_prime(v, config=config).is_prime: found.append(FermaTPrime(n=n, value=v))
    return found


def recurrence_check(n: int, config: ForgeConfig = DEFAULT_CONFIG) -> bool:
    """F_(n+1) = F_0 * F_1 * ... * F_n + 2."""
    config.check_bits(f"F_{n + 1}", 1 << (n + 1))
    product = mpz(1)
    for i in range(n + 1): product *= fermat_number(i, config)
    return product + 2 == fermat_number(n + 1, config)


def pairwise_coprime_check(n_max: int, config: ForgeConfig = DEFAULT_CONFIG) -> bool:
    values = [mpz(fermat_number(i, config)) for i in range(n_max + 1)]
    return all(gmpy2.gcd(values[i], values[j]) == 1 for i in range(len(values)) for j in range(i + 1, len(values)))


def fullness_check(p: int, n: int, strength: Fullness = Fullness.LUCAS) -> bool:
    """p = 1 (mod 2^(n+1)) under Euler's theorem, (mod 2^(n+2)) under Lucas'."""
    return p % Fullness(strength).modulus(n) == 1


def verify_record(record: FactorRecord, config: ForgeConfig = DEFAULT_CONFIG) -> Optional[str]:
    """None when the record checks out, otherwise the reason it fails."""
    if record.p != record.k * (1 << record.m) + 1: return "p != k*2^m + 1"
    if record.m < record.n + 2: return f"m={record.m} below the Lucas bound n+2"
    if not fullness_check(record.p, record.n, Fullness.LUCAS): return "p is not 1 mod 2^(n+2)"
    verdict = proth_test(ProthCandidate(k=record.k, m=record.m), config)
    if not verdict.is_prime: return f"p is {verdict.status.value} ({verdict.test})"
    trace = residue_trace(record.p, max_steps=record.n + 1, check_prime=False, config=config)
    if trace.hit_index != record.n: return f"residue trace does not reach -1 at index {record.n}"
    if record.n <= DIRECT_CHECK_MAX_N and fermat_number(record.n, config) % record.p:
        return f"F_{record.n} mod p is nonzero"
    return None


# ? Factor search ---------------------------------------------------------------------

class FactorSearchReport(Report):
    KIND = "factor_search"
    CSV_COLUMNS = ("n", "k", "m", "p", "method", "verified")

    n_lo: int
    n_hi: int
    k_max: int
    m_max: int
    candidates: int = 0
    proth_primes: int = 0
    records: list[FactorRecord] = Field(default_factory=list)
    self_divisors: list[int] = Field(default_factory=list)  # * indices n where the hit was p = F_n itself
    undetermined: list[str] = Field(default_factory=list)

    def csv_rows(self):
        return [r.model_dump(mode="json") for r in self.records]


def _wheel_survivors(m: int, k_max: int) -> list[int]:
    """Odd k <= k_max for which k*2^m + 1 has no odd prime factor below WHEEL_LIMIT (unless it is that prime)."""
    ks = np.arange(1, k_max + 1, 2, dtype=np.int64)
    keep = np.ones(ks.size, dtype=bool)
    small = []
    for q in _small_sieve(WHEEL_LIMIT).tolist()[1:]:
        r = (-pow(2, -m, q)) % q  # ^ k*2^m + 1 = 0 (mod q)  <=>  k = -2^(-m) (mod q)
        keep &= ks % q != r
        if (q - 1) % (1 << m) == 0 and ((k := (q - 1) >> m) & 1) and k <= k_max: small.append(k)
    survivors = set(ks[keep].tolist()) | set(small)
    return sorted(survivors)


def _search_unit(m: int, n_lo: int, n_hi: int, k_max: int, config: ForgeConfig) -> tuple[int, int, list[FactorRecord], list[int], list[str]]:
    candidates = proth_primes = 0
    records: list[FactorRecord] = []
    self_divisors: list[int] = []
    undetermined: list[str] = []
    for k in _wheel_survivors(m, k_max):
        candidates += 1
        verdict = proth_test(ProthCandidate(k=k, m=m), config)
        match verdict.status:
            case Status.COMPOSITE: continue
            case Status.UNDETERMINED:
                undetermined.append(f"{k}*2^{m}+1")
                continue
        proth_primes += 1
        p = verdict.n
        trace = residue_trace(p, max_steps=min(n_hi, m - 2) + 1, check_prime=False, config=config)
        if trace.hit_index is None or not n_lo <= trace.hit_index <= n_hi: continue
        n = trace.hit_index
        if k == 1 and m == 1 << n:
            log.info(f"F_{n} divides itself: primality evidence, not a factor record")
            self_divisors.append(n)
            continue
        records.append(FactorRecord(n=n, k=k, m=m, p=p, method="proth-trace", verified=True))
    return candidates, proth_primes, records, self_divisors, undetermined


def run_factor_search(
    n_lo: int,
    n_hi: int,
    k_max: int = DEFAULT_K_MAX,
    m_max: int = DEFAULT_M_MAX,
    config: ForgeConfig = DEFAULT_CONFIG,
) -> FactorSearchReport:
    """
    Walk the (k, m) rectangle one m at a time: wheel-sieve k*2^m + 1, Proth-test
    the survivors and square 2 mod each prime. A -1 at step n in [n_lo, n_hi]
    yields a verified record for F_n. Units run in parallel when config.workers > 1
    and are merged in (m, k) order.
    """
    if n_lo < 0 or n_hi < n_lo: raise DomainError(f"bad index range [{n_lo}, {n_hi}]")
    if k_max < 1: raise DomainError("k_max must be at least 1")
    config.check_bits("factor search candidates", k_max.bit_length() + m_max + 1)
    ms = list(range(n_lo + 2, m_max + 1))
    log.info(f"factor search F_{n_lo}..F_{n_hi}: k <= {k_max}, m in [{n_lo + 2}, {m_max}]")

    args = [(m, n_lo, n_hi, k_max, config) for m in ms]
    match config.workers > 1 and len(ms) > 1:
        case True:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                units = list(pool.map(_search_unit, *zip(*args)))
        case False: units = [_search_unit(*a) for a in args]

    report = FactorSearchReport(n_lo=n_lo, n_hi=n_hi, k_max=k_max, m_max=m_max)
    fields = {"candidates": 0, "proth_primes": 0, "records": [], "self_divisors": [], "undetermined": []}
    for candidates, primes, records, selfs, undetermined in units:
        fields["candidates"] += candidates
        fields["proth_primes"] += primes
        fields["records"] += records
        fields["self_divisors"] += selfs
        fields["undetermined"] += undetermined
    log.info(f"factor search done: {len(fields['records'])} records from {fields['proth_primes']} Proth primes")
    return report.model_copy(update=fields)


def factor_search(n_lo: int, n_hi: int, k_max: int = DEFAULT_K_MAX, m_max: int = DEFAULT_M_MAX, config: ForgeConfig = DEFAULT_CONFIG) -> list[FactorRecord]:
    return run_factor_search(n_lo, n_hi, k_max, m_max, config).records


# ? Lists (A) and (B) -----------------------------------------------------------------

class ListClassification(Report):
    """Indices in [n_lo, n_hi] with a verified factor (list A) and without (list B)."""
    KIND = "classification"
    CSV_COLUMNS = ("n", "list")

    n_lo: int
    n_hi: int
    list_a: list[int]
    list_b: list[int]
    excluded: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _partition(self) -> "ListClassification":
        a, b = set(self.list_a), set(self.list_b)
        if a & b or a | b != set(range(self.n_lo, self.n_hi + 1)):
            raise ValueError("lists A and B must partition the range")
        return self

    def csv_rows(self):
        return [{"n": n, "list": "A" if n in self.list_a else "B"} for n in range(self.n_lo, self.n_hi + 1)]


def classify_lists(db: "FactorDatabase", n_lo: int, n_hi: int) -> ListClassification:
    if n_hi < n_lo: raise DomainError(f"bad index range [{n_lo}, {n_hi}]")
    records = db.snapshot()
    unverified = [r for r in records if not db.is_trusted(r)]
    if unverified:
        log.warning("excluding unverified records: " + ", ".join(f"F_{r.n}/{r.p}" for r in unverified))
    found = {r.n for r in records if db.is_trusted(r)}
    rng = range(n_lo, n_hi + 1)
    return ListClassification(
        n_lo=n_lo, n_hi=n_hi,
        list_a=[n for n in rng if n in found],
        list_b=[n for n in rng if n not in found],
        excluded=[f"F_{r.n}:{r.p}" for r in unverified],
    )


# ? Dubner-Keller statistic ------------------------------------------------------------

class DubnerKellerReport(Report):
    """Share of Proth primes k*2^m + 1 (m in range) that divide some Fermat number, against 1/k."""
    KIND = "dubner_keller"
    CSV_COLUMNS = ("k", "m_lo", "m_hi", "sample_size", "dividing", "fraction", "expected", "std_error", "z_score", "within_3_sigma")

    k: int
    m_lo: int
    m_hi: int
    sample_size: int
    dividing: int
    fraction: Optional[float] = None
    expected: float
    std_error: Optional[float] = None
    z_score: Optional[float] = None
    within_3_sigma: Optional[bool] = None
    generic_probability: Optional[float] = None  # * mean 1/(k*2^m): chance a generic prime that size divides
    hits: list[tuple[int, int]] = Field(default_factory=list)  # * (m, n) with k*2^m + 1 | F_n
    misses: list[int] = Field(default_factory=list)  # * m of Proth primes dividing no F_n
    undetermined: list[int] = Field(default_factory=list)


def dubner_keller_stat(k: int, m_lo: int, m_hi: int, config: ForgeConfig = DEFAULT_CONFIG) -> DubnerKellerReport:
    if m_lo < 1 or m_hi < m_lo: raise DomainError(f"bad exponent range [{m_lo}, {m_hi}]")
    if k % 2 == 0 or k < 1: raise DomainError(f"k={k} must be odd and positive")
    config.check_bits("Dubner-Keller candidates", k.bit_length() + m_hi + 1)
    hits: list[tuple[int, int]] = []
    misses: list[int] = []
    undetermined: list[int] = []
    generic = 0.0
    for m in range(m_lo, m_hi + 1):
        verdict = proth_test(ProthCandidate(k=k, m=m), config)
        match verdict.status:
            case Status.COMPOSITE: continue
            case Status.UNDETERMINED:
                undetermined.append(m)
                continue
        generic += 1 / (k * 2.0**m)
        # ^ ord(2) divides p - 1 = k*2^m, and is a power of two iff -1 shows up within m squarings
        trace = residue_trace(verdict.n, max_steps=m + 1, check_prime=False, config=config)
        match trace.hit_index:
            case None: misses.append(m)
            case n: hits.append((m, n))

    size = len(hits) + len(misses)
    expected = 1 / k
    if not size:
        log.warning(f"no Proth primes {k}*2^m+1 with m in [{m_lo}, {m_hi}]")
        return DubnerKellerReport(k=k, m_lo=m_lo, m_hi=m_hi, sample_size=0, dividing=0, expected=expected, undetermined=undetermined)
    fraction = len(hits) / size
    std_error = sqrt(expected * (1 - expected) / size)
    z = (fraction - expected) / std_error if std_error else None
    return DubnerKellerReport(
        k=k, m_lo=m_lo, m_hi=m_hi, sample_size=size, dividing=len(hits), fraction=fraction,
        expected=expected, std_error=std_error, z_score=z,
        within_3_sigma=None if z is None else abs(z) <= 3,
        generic_probability=generic / size, hits=hits, misses=misses, undetermined=undetermined,
    )
