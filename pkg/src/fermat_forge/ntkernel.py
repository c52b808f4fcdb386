"""
ntkernel: multiprecision modular arithmetic, sieving, factoring and the
primality / order tests the rest of fermat-forge is built on.

Every function is pure; returned models are frozen and safe to share.
"""
import random
from enum import Enum
from functools import lru_cache
from math import isqrt
from typing import Annotated, Iterator, Optional

import gmpy2
import numpy as np
from gmpy2 import mpz
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from fermat_forge.utils import DEFAULT_CONFIG, DomainError, ForgeConfig, IncompleteFactorization
from fermat_forge.utils.log import get_logger

log = get_logger(__name__)

Natural = Annotated[int, Field(ge=0)]

# * Miller-Rabin with the first 13 primes as bases is exact below this bound
DETERMINISTIC_MR_LIMIT = 3_317_044_064_679_887_385_961_981
DETERMINISTIC_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
DEFAULT_ROUNDS = 40
PEPIN_BASE = 3
SEGMENT = 1 << 22


def compact(value: int) -> int | str:
    """JSON-friendly rendering: small ints stay ints, wide ones become strings."""
    if value.bit_length() <= 63: return value
    if value.bit_length() <= 256: return str(value)
    return f"<{value.bit_length()}-bit ...{value & (2**64 - 1):016x}>"


class Residue(BaseModel):
    """An integer reduced modulo an explicit modulus."""
    value: Natural
    modulus: int = Field(..., ge=2)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _reduced(self) -> "Residue":
        if self.value >= self.modulus:
            raise ValueError(f"residue {self.value} not reduced modulo {self.modulus}")
        return self

    def __eq__(self, other: object) -> bool:
        match other:
            case int(): return self.value == other
            case Residue(): return (self.value, self.modulus) == (other.value, other.modulus)
            case _: return NotImplemented

    def __hash__(self) -> int: return hash((self.value, self.modulus))

    @property
    def is_minus_one(self) -> bool: return self.value == self.modulus - 1


class ProthCandidate(BaseModel):
    """A number k*2^m + 1 with k odd."""
    k: int = Field(..., ge=1)
    m: int = Field(..., ge=1)

    model_config = ConfigDict(frozen=True)

    @field_validator("k")
    @classmethod
    def _odd(cls, k: int) -> int:
        if k % 2 == 0: raise DomainError(f"Proth multiplier k={k} must be odd")
        return k

    def value(self) -> int: return self.k * (1 << self.m) + 1

    @property
    def proth_condition(self) -> bool:
        """Proth's theorem applies only when k < 2^m."""
        return self.k < (1 << self.m)


class Status(str, Enum):
    PRIME = "prime"
    COMPOSITE = "composite"
    UNDETERMINED = "undetermined"


class PrimalityVerdict(BaseModel):
    """Outcome of a primality test together with the evidence that justifies it."""
    n: int
    status: Status
    test: str
    deterministic: bool = False
    divisor: Optional[int] = None  # * a proper divisor, when one was exposed
    witness: Optional[int] = None  # * base that decided the verdict
    residue: Optional[int] = None  # * final residue of the test

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _divisor_is_proper(self) -> "PrimalityVerdict":
        if self.divisor is not None:
            if self.status != Status.COMPOSITE:
                raise ValueError("only composite verdicts carry a divisor")
            if not (1 < self.divisor < self.n and self.n % self.divisor == 0):
                raise ValueError(f"{self.divisor} is not a proper divisor of {self.n}")
        return self

    @field_serializer("n", "divisor", "witness", "residue")
    def _ser_int(self, v: Optional[int]): return None if v is None else compact(v)

    @property
    def is_prime(self) -> bool: return self.status == Status.PRIME

    @property
    def is_composite(self) -> bool: return self.status == Status.COMPOSITE


class TraceStop(str, Enum):
    HIT = "hit"
    CYCLE = "cycle"
    MAX_STEPS = "max_steps"


class ResidueTrace(BaseModel):
    """The values 2^(2^i) mod p for i = 0, 1, ... produced by repeated squaring."""
    p: int
    sequence: list[int]
    hit_index: Optional[int] = None
    stop: TraceStop

    model_config = ConfigDict(frozen=True)

    @property
    def residues(self) -> list[Residue]:
        return [Residue(value=v, modulus=self.p) for v in self.sequence]

    @field_serializer("p")
    def _ser_p(self, v: int): return compact(v)

    @field_serializer("sequence")
    def _ser_seq(self, seq: list[int]): return [compact(v) for v in seq]


class Factorization(BaseModel):
    """Prime factors with multiplicity; `cofactor` > 1 marks an unfinished split."""
    n: int
    factors: dict[int, int] = Field(default_factory=dict)
    cofactor: int = 1

    model_config = ConfigDict(frozen=True)

    @property
    def complete(self) -> bool: return self.cofactor == 1

    def primes(self) -> list[int]: return sorted(self.factors)

    def require_complete(self) -> "Factorization":
        if not self.complete: raise IncompleteFactorization(self.n, self.cofactor)
        return self

    @field_serializer("n", "cofactor")
    def _ser_int(self, v: int): return compact(v)

    @field_serializer("factors")
    def _ser_factors(self, f: dict[int, int]): return {str(p): e for p, e in sorted(f.items())}


class OrderOfTwo(BaseModel):
    p: int
    order: int
    power_of_two: bool
    fermat_index: Optional[int] = None  # * set when order = 2^(n+1), hence p | F_n

    model_config = ConfigDict(frozen=True)


# ? Modular arithmetic ---------------------------------------------------------------

def mod_pow(base: int, exponent: int, modulus: int, config: ForgeConfig = DEFAULT_CONFIG) -> Residue:
    """base^exponent mod modulus by left-to-right binary exponentiation (GMP)."""
    if modulus < 2: raise DomainError(f"modulus must be at least 2, got {modulus}")
    if base < 0 or exponent < 0: raise DomainError("mod_pow works on naturals only")
    config.check_bits("mod_pow modulus", modulus.bit_length())
    return Residue(value=int(gmpy2.powmod(base, exponent, modulus)), modulus=modulus)


# ? Sieving --------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _small_sieve(limit: int) -> np.ndarray:
    """Plain Eratosthenes up to `limit` (kept small: used for base primes)."""
    if limit < 2: return np.array([], dtype=np.int64)
    is_prime = np.ones(limit + 1, dtype=bool)
    is_prime[:2] = False
    for p in range(2, isqrt(limit) + 1):
        if is_prime[p]: is_prime[p * p::p] = False
    return np.flatnonzero(is_prime).astype(np.int64)


def prime_mask(lo: int, hi: int) -> np.ndarray:
    """Boolean mask over [lo, hi]: entry i is True iff lo + i is prime."""
    if hi < lo: return np.zeros(0, dtype=bool)
    mask = np.ones(hi - lo + 1, dtype=bool)
    mask[:max(0, min(2, hi + 1) - lo)] = False
    # ^ round the base bound up to a power of two so the lru_cache is reused across windows
    for p in _small_sieve(1 << isqrt(hi).bit_length()).tolist():
        start = max(p * p, -(-lo // p) * p)
        if start > hi: continue
        mask[start - lo::p] = False
    return mask


def iter_prime_segments(lo: int, hi: int, segment: int = SEGMENT) -> Iterator[np.ndarray]:
    """Yield the primes of [lo, hi] one segment at a time, ascending."""
    lo = max(lo, 2)
    while lo <= hi:
        top = min(hi, lo + segment - 1)
        yield lo + np.flatnonzero(prime_mask(lo, top)).astype(np.int64)
        lo = top + 1


def primes_between(lo: int, hi: int, config: ForgeConfig = DEFAULT_CONFIG) -> np.ndarray:
    config.check_sieve("sieve", hi)
    parts = list(iter_prime_segments(lo, hi))
    return np.concatenate(parts) if parts else np.array([], dtype=np.int64)


def sieve_primes(limit: int, config: ForgeConfig = DEFAULT_CONFIG) -> list[int]:
    """The primes in [2, limit], ascending, via a segmented sieve."""
    if limit < 2: return []
    return primes_between(2, limit, config).tolist()


def count_primes_between(lo: int, hi: int, config: ForgeConfig = DEFAULT_CONFIG) -> int:
    config.check_sieve("prime count", hi)
    return sum(int(seg.size) for seg in iter_prime_segments(lo, hi))


# ? Primality ------------------------------------------------------------------------

def _small_verdict(n: int) -> Optional[PrimalityVerdict]:
    """Settle n by trial division by the primes below 100, when that suffices."""
    for p in _small_sieve(100).tolist():
        if n == p: return PrimalityVerdict(n=n, status=Status.PRIME, test="trial-division", deterministic=True)
        if n % p == 0: return PrimalityVerdict(n=n, status=Status.COMPOSITE, test="trial-division", deterministic=True, divisor=p)
    if n < 100 * 100:
        return PrimalityVerdict(n=n, status=Status.PRIME, test="trial-division", deterministic=True)
    return None


def probable_prime(n: int, rounds: int = DEFAULT_ROUNDS, config: ForgeConfig = DEFAULT_CONFIG) -> PrimalityVerdict:
    """
    Miller-Rabin. Composite verdicts are certain and carry the witness base
    (plus a divisor when a nontrivial square root of 1 shows up). Below
    DETERMINISTIC_MR_LIMIT the fixed base set makes prime verdicts exact; above
    it `rounds` bases are drawn from a generator seeded by n, so reruns agree.
    """
    if n < 2: raise DomainError(f"primality is defined for n >= 2, got {n}")
    config.check_bits("probable_prime operand", n.bit_length())
    if (small := _small_verdict(n)) is not None: return small

    deterministic = n < DETERMINISTIC_MR_LIMIT
    match deterministic:
        case True: bases = DETERMINISTIC_MR_BASES
        case False:
            rng = random.Random(n)
            bases = tuple(rng.randrange(2, n - 1) for _ in range(rounds))

    N = mpz(n)
    d, s = N - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in bases:
        x = gmpy2.powmod(a, d, N)
        if x == 1 or x == N - 1: continue
        for _ in range(s - 1):
            y = gmpy2.powmod(x, 2, N)
            if y == N - 1: break
            if y == 1:
                g = int(gmpy2.gcd(x - 1, N))
                return PrimalityVerdict(n=n, status=Status.COMPOSITE, test="miller-rabin", deterministic=True, witness=a, divisor=g)
            x = y
        else:
            return PrimalityVerdict(n=n, status=Status.COMPOSITE, test="miller-rabin", deterministic=True, witness=a, residue=int(x))
    test = "miller-rabin-deterministic" if deterministic else f"miller-rabin-{rounds}"
    return PrimalityVerdict(n=n, status=Status.PRIME, test=test, deterministic=deterministic)


def is_prime(n: int, config: ForgeConfig = DEFAULT_CONFIG) -> bool:
    return n >= 2 and probable_prime(n, config=config).is_prime


# * 3, 5, 7, 11, ... : the first 64 odd primes
PROTH_BASES: tuple[int, ...] = tuple(_small_sieve(320).tolist()[1:65])


def proth_test(c: ProthCandidate, config: ForgeConfig = DEFAULT_CONFIG) -> PrimalityVerdict:
    """
    Proth's theorem: p = k*2^m + 1 with k < 2^m is prime iff a^((p-1)/2) = -1 (mod p)
    for some a. Bases are tried in PROTH_BASES order; a residue outside {1, -1}
    violates Euler's criterion and proves p composite. Exhausting the bases
    yields an undetermined verdict.
    """
    p = c.value()
    if not c.proth_condition:
        log.debug(f"k={c.k} >= 2^{c.m}: falling back to Miller-Rabin")
        return probable_prime(p, config=config)
    config.check_bits("proth candidate", p.bit_length())

    P = mpz(p)
    half = (P - 1) // 2
    for a in PROTH_BASES:
        if a % p == 0: continue
        if 1 < (g := int(gmpy2.gcd(a, P))) < p:
            return PrimalityVerdict(n=p, status=Status.COMPOSITE, test="proth", deterministic=True, divisor=g, witness=a)
        r = gmpy2.powmod(a, half, P)
        if r == P - 1:
            return PrimalityVerdict(n=p, status=Status.PRIME, test="proth", deterministic=True, witness=a, residue=int(r))
        if r != 1:
            return PrimalityVerdict(n=p, status=Status.COMPOSITE, test="proth", deterministic=True, witness=a, residue=int(r))
    log.warning(f"proth bases exhausted for {c.k}*2^{c.m}+1")
    return PrimalityVerdict(n=p, status=Status.UNDETERMINED, test="proth")


def pepin_cost(n: int) -> int:
    """Length of F_n relative to F_24, the largest Fermat number settled this way."""
    return 2 ** (n - 24) if n >= 24 else 1


def pepin_test(n: int, config: ForgeConfig = DEFAULT_CONFIG) -> PrimalityVerdict:
    """F_n (n >= 1) is prime iff 3^((F_n - 1)/2) = -1 (mod F_n)."""
    if n < 1: raise DomainError("Pepin's test applies to F_n with n >= 1")
    what = f"Pepin test on F_{n}" + (f" ({pepin_cost(n):,}x the length of F_24)" if n > 24 else "")
    config.check_bits(what, 1 << n)
    F = (mpz(1) << (1 << n)) + 1
    r = gmpy2.powmod(PEPIN_BASE, (F - 1) // 2, F)
    status = Status.PRIME if r == F - 1 else Status.COMPOSITE
    return PrimalityVerdict(n=int(F), status=status, test="pepin", deterministic=True, witness=PEPIN_BASE, residue=int(r))


def lucas_lehmer(p: int, config: ForgeConfig = DEFAULT_CONFIG) -> PrimalityVerdict:
    """M_p = 2^p - 1 is prime iff s_(p-2) = 0 (mod M_p), s_0 = 4, s_(i+1) = s_i^2 - 2."""
    if p < 3 or p % 2 == 0 or not is_prime(p, config):
        raise DomainError(f"Lucas-Lehmer needs an odd prime exponent, got {p}")
    config.check_bits(f"Lucas-Lehmer on M_{p}", p)
    M = (mpz(1) << p) - 1
    s = mpz(4)
    for _ in range(p - 2):
        s = s * s - 2
        # ^ reduce mod 2^p - 1 with shifts and masks
        while s > M: s = (s & M) + (s >> p)
        if s == M: s = mpz(0)
    s %= M
    status = Status.PRIME if s == 0 else Status.COMPOSITE
    return PrimalityVerdict(n=int(M), status=status, test="lucas-lehmer", deterministic=True, residue=int(s))


# ? Factoring ------------------------------------------------------------------------

def _brent_rho(n: int, rng: random.Random, effort: int) -> Optional[int]:
    """Pollard rho with Brent's cycle finding and batched gcds; None when effort runs out."""
    N = mpz(n)
    spent = 0
    while spent < effort:
        y, c = mpz(rng.randrange(1, n)), mpz(rng.randrange(1, n))
        g = r = q = mpz(1)
        x = ys = y
        while g == 1 and spent < effort:
            x = y
            for _ in range(r): y = (y * y + c) % N
            k = 0
            while k < r and g == 1:
                ys = y
                for _ in range(min(128, r - k)):
                    y = (y * y + c) % N
                    q = q * abs(x - y) % N
                g = gmpy2.gcd(q, N)
                k += 128
            spent += r
            r *= 2
        if g == N:
            g = mpz(1)
            while g == 1:
                ys = (ys * ys + c) % N
                g = gmpy2.gcd(abs(x - ys), N)
        if 1 < g < N: return int(g)
    return None


def factorize(n: int, config: ForgeConfig = DEFAULT_CONFIG) -> Factorization:
    """
    Trial division up to config.trial_bound, then Pollard-Brent rho seeded from n.
    When the rho budget runs out the unsplit part is returned as `cofactor`.
    """
    if n < 1: raise DomainError(f"factorize needs n >= 1, got {n}")
    config.check_bits("factorize operand", n.bit_length())
    factors: dict[int, int] = {}
    rest = n
    for p in _small_sieve(config.trial_bound).tolist():
        if p * p > rest: break
        while rest % p == 0:
            factors[p] = factors.get(p, 0) + 1
            rest //= p

    cofactor = 1
    stack = [rest] if rest > 1 else []
    rng = random.Random(n)
    while stack:
        m = stack.pop()
        if is_prime(m, config):
            factors[m] = factors.get(m, 0) + 1
            continue
        if gmpy2.is_square(m):
            root = int(gmpy2.isqrt(m))
            stack.extend((root, root))
            continue
        d = _brent_rho(m, rng, config.effort_budget)
        match d:
            case None:
                log.warning(f"rho effort exhausted on a {m.bit_length()}-bit cofactor of {compact(n)}")
                cofactor *= m
            case _: stack.extend((d, m // d))
    return Factorization(n=n, factors=dict(sorted(factors.items())), cofactor=cofactor)


def euler_phi(q: int, config: ForgeConfig = DEFAULT_CONFIG) -> int:
    if q < 1: raise DomainError("phi is defined for q >= 1")
    result = q
    for p in factorize(q, config).require_complete().primes():
        result -= result // p
    return result


# ? Orders and residue traces ------------------------------------------------------

def _require_odd_prime(p: int, what: str, config: ForgeConfig) -> None:
    if p < 3 or p % 2 == 0: raise DomainError(f"{what} needs an odd prime, got {p}")
    if not is_prime(p, config): raise DomainError(f"{what} needs an odd prime, {p} is composite")


def order_of_two(p: int, config: ForgeConfig = DEFAULT_CONFIG) -> OrderOfTwo:
    """Multiplicative order of 2 mod p, by factoring p - 1 and stripping prime factors."""
    _require_odd_prime(p, "order_of_two", config)
    order = p - 1
    for q in factorize(p - 1, config).require_complete().primes():
        while order % q == 0 and gmpy2.powmod(2, order // q, p) == 1:
            order //= q
    power_of_two = order & (order - 1) == 0
    index = order.bit_length() - 2 if power_of_two else None
    return OrderOfTwo(p=p, order=order, power_of_two=power_of_two, fermat_index=index)


def residue_trace(p: int, max_steps: int = 64, check_prime: bool = True, config: ForgeConfig = DEFAULT_CONFIG) -> ResidueTrace:
    """
    Square 2 repeatedly mod p. Stops at the first index r with 2^(2^r) = -1 (p | F_r),
    at the first repeated value (no hit is possible after a cycle), or after
    max_steps values.
    """
    if max_steps < 1: raise DomainError("max_steps must be at least 1")
    if check_prime: _require_odd_prime(p, "residue_trace", config)
    elif p < 3 or p % 2 == 0: raise DomainError(f"residue_trace needs an odd prime, got {p}")

    P = mpz(p)
    v = mpz(2) % P
    sequence: list[int] = []
    seen: set[int] = set()
    while True:
        sequence.append(int(v))
        seen.add(int(v))
        if v == P - 1:
            return ResidueTrace(p=p, sequence=sequence, hit_index=len(sequence) - 1, stop=TraceStop.HIT)
        if len(sequence) >= max_steps:
            return ResidueTrace(p=p, sequence=sequence, stop=TraceStop.MAX_STEPS)
        v = v * v % P
        if int(v) in seen:
            return ResidueTrace(p=p, sequence=sequence, stop=TraceStop.CYCLE)
