"""
fermat-forge command line. One subcommand per experiment; reports go to stdout
(or --output) as JSON lines or CSV, logs go to stderr.

Exit codes: 0 ok, 1 usage or domain error, 2 budget refusal, 3 verification failure.
"""
import argparse
import logging
import math
import re
import sys
import time
from pathlib import Path
from typing import Any, Callable, Literal, Optional

import gmpy2
import mpmath
import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from fermat_forge import __version__
from fermat_forge.db import DbVerifyReport, FactorDatabase, SqlFactorStore, StoreConfig, db_verify
from fermat_forge.fermat import (
    DEFAULT_K_MAX,
    DEFAULT_M_MAX,
    FactorRecord,
    FermaTPrime,
    classify_lists,
    dubner_keller_stat,
    ferma_t_primes,
    run_factor_search,
)
from fermat_forge.heuristics import (
    DEFAULT_TERMS,
    ExpectationModel,
    expected_new_fermat_primes,
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
from fermat_forge.intervals import (
    DEFAULT_EXCEPTIONAL_FRACTION,
    DEFAULT_MULTIPLIER,
    balls_in_cups,
    kfull_ratio_experiment,
    mertens_product,
    second_moment,
    selberg_window_check,
)
from fermat_forge.ntkernel import (
    Factorization,
    OrderOfTwo,
    PrimalityVerdict,
    ResidueTrace,
    factorize,
    lucas_lehmer,
    order_of_two,
    pepin_test,
    residue_trace,
)
from fermat_forge.report import DEFAULT_TOLERANCE, Report, render
from fermat_forge.utils import (
    DomainError,
    ForgeConfig,
    ForgeError,
    IncompleteFactorization,
    ResourceError,
    VerificationError,
    red,
)
from fermat_forge.utils.log import configure, get_logger

log = get_logger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_RESOURCE, EXIT_VERIFY = 0, 1, 2, 3
GLOBAL_FLAGS = {"format", "output", "seed", "workers", "bit_budget", "sieve_budget", "effort_budget", "db", "precision", "timing", "verbose", "quiet", "handler", "command", "db_command"}


# ? Wrappers for kernel results ----------------------------------------------------------

class VerdictReport(Report):
    KIND = "verdict"
    CSV_COLUMNS = ("subject", "status", "test", "deterministic", "witness", "residue")

    subject: str
    verdict: PrimalityVerdict

    def csv_rows(self):
        return [{"subject": self.subject, **self.verdict.model_dump(mode="json")}]


class TraceReport(Report):
    KIND = "trace"
    CSV_COLUMNS = ("index", "residue", "minus_one")

    trace: ResidueTrace

    def csv_rows(self):
        seq = self.trace.model_dump(mode="json")["sequence"]
        return [{"index": i, "residue": v, "minus_one": i == self.trace.hit_index} for i, v in enumerate(seq)]


class FactorizationReport(Report):
    KIND = "factorization"
    CSV_COLUMNS = ("prime", "exponent")

    factorization: Factorization

    def csv_rows(self):
        rows = [{"prime": p, "exponent": e} for p, e in self.factorization.model_dump(mode="json")["factors"].items()]
        if not self.factorization.complete: rows.append({"prime": f"cofactor:{self.factorization.cofactor}", "exponent": 1})
        return rows


class OrderReport(Report):
    KIND = "order"
    CSV_COLUMNS = ("p", "order", "power_of_two", "fermat_index")

    order: OrderOfTwo

    def csv_rows(self): return [self.order.model_dump(mode="json")]


class FermaTReport(Report):
    KIND = "ferma_t"
    CSV_COLUMNS = ("n", "value")

    limit: int
    primes: list[FermaTPrime]

    def csv_rows(self): return [p.model_dump(mode="json") for p in self.primes]


class LedgerReport(Report):
    """Records written by `db seed` or copied by `db export`."""
    KIND = "ledger"
    CSV_COLUMNS = ("n", "k", "m", "p", "method", "verified")

    action: str
    target: str
    records: list[FactorRecord] = Field(default_factory=list)

    def csv_rows(self): return [r.model_dump(mode="json") for r in self.records]


# ? Run plumbing ----------------------------------------------------------------------

class RunConfig(BaseModel):
    """Everything that determines a run's output bytes."""
    subcommand: str
    parameters: dict[str, Any]
    format: Literal["text", "csv"] = "text"
    seed: Optional[int] = None
    bit_budget: int
    sieve_budget: int
    effort_budget: int
    workers: int
    db_path: str
    precision: int

    model_config = ConfigDict(frozen=True, extra="forbid")


class RunReport(Report):
    KIND = "run"
    CSV_COLUMNS = ("subcommand", "version", "format", "seed", "parameters")

    subcommand: str
    version: str = __version__
    versions: dict[str, str]
    format: str
    seed: Optional[int] = None
    parameters: dict[str, Any]
    config: dict[str, Any]
    wall_time: Optional[float] = None  # * only with --timing

    def csv_rows(self):
        return [{"subcommand": self.subcommand, "version": self.version, "format": self.format, "seed": self.seed, "parameters": self.parameters}]


def library_versions() -> dict[str, str]:
    return {"numpy": np.__version__, "gmpy2": gmpy2.version(), "mpmath": mpmath.__version__, "pydantic": pydantic.VERSION}


def run(config: RunConfig, handler: Callable[[RunConfig, ForgeConfig], list[Report]], timing: bool = False) -> tuple[RunReport, list[Report]]:
    """Dispatch one subcommand and wrap its reports behind a config header."""
    forge = ForgeConfig(
        bit_budget=config.bit_budget, sieve_budget=config.sieve_budget, effort_budget=config.effort_budget,
        workers=config.workers, db_path=config.db_path, precision=config.precision, seed=config.seed or 0,
    )
    started = time.perf_counter()
    reports = handler(config, forge)
    elapsed = time.perf_counter() - started
    log.info(f"{config.subcommand} finished in {elapsed:.3f}s")
    header = RunReport(
        subcommand=config.subcommand, versions=library_versions(), format=config.format, seed=config.seed,
        parameters=config.parameters, config=forge.model_dump(mode="json"), wall_time=elapsed if timing else None,
    )
    return header, reports


# ? Handlers --------------------------------------------------------------------------
# each takes the run config (parameters live in run.parameters) and the effective ForgeConfig

def _pepin(run: RunConfig, config: ForgeConfig) -> list[Report]:
    p = run.parameters
    top = p["to"] if p["to"] is not None else p["n"]
    return [VerdictReport(subject=f"F_{n}", verdict=pepin_test(n, config)) for n in range(p["n"], top + 1)]


def _lucas_lehmer(run: RunConfig, config: ForgeConfig) -> list[Report]:
    return [VerdictReport(subject=f"M_{p}", verdict=lucas_lehmer(p, config)) for p in run.parameters["p"]]


def _trace(run: RunConfig, config: ForgeConfig) -> list[Report]:
    p = run.parameters
    return [TraceReport(trace=residue_trace(p["p"], max_steps=p["max_steps"], config=config))]


def _factor_search(run: RunConfig, config: ForgeConfig) -> list[Report]:
    p = run.parameters
    n_lo = p["n"] if p["n"] is not None else p["n_lo"]
    n_hi = p["n"] if p["n"] is not None else p["n_hi"]
    report = run_factor_search(n_lo, n_hi, p["k_max"], p["m_max"], config)
    if p["save"]: FactorDatabase(config.db_path, config=config).append(report.records)
    return [report]


def _classify(run: RunConfig, config: ForgeConfig) -> list[Report]:
    p = run.parameters
    return [classify_lists(FactorDatabase(config.db_path, config=config), p["n_lo"], p["n_hi"])]


def _dubner_keller(run: RunConfig, config: ForgeConfig) -> list[Report]:
    p = run.parameters
    return [dubner_keller_stat(k, p["m_lo"], p["m_hi"], config) for k in p["k"]]


def _kfull_ratio(run: RunConfig, config: ForgeConfig) -> list[Report]:
    p = run.parameters
    x = p["x"]
    schedule = p["r"] or [r for r in (x // 10, x // 100, x // 1000, round(math.log(x) ** 3)) if 0 < r < x]
    return list(kfull_ratio_experiment(x, p["K"], sorted(set(schedule), reverse=True), config))


def _mertens(run: RunConfig, config: ForgeConfig) -> list[Report]:
    return [mertens_product(B, config) for B in run.parameters["B"]]


def _selberg_window(run: RunConfig, config: ForgeConfig) -> list[Report]:
    p = run.parameters
    return [selberg_window_check(p["x"], p["y"], p["samples"], config.seed, p["epsilon"], p["multiplier"], config)]


def _second_moment(run: RunConfig, config: ForgeConfig) -> list[Report]:
    p = run.parameters
    return [second_moment(p["x"], p["h"], p["q"], p["step"], p["tolerance"], p["exceptional_fraction"], config)]


def _balls_cups(run: RunConfig, config: ForgeConfig) -> list[Report]:
    p = run.parameters
    return [balls_in_cups(p["B"], p["C"], p["trials"], config.seed, p["epsilon"])]


def _prob(run: RunConfig, config: ForgeConfig) -> list[Report]:
    p = run.parameters
    match p["model"]:
        case "naive": return [naive_prob(n, config) for n in p["n"]]
        case "sieve-adjusted": return [sieve_adjusted_prob(n, p["B"], config) for n in p["n"]]
        case "hardy-wright": return [hardy_wright_term(n, p["A"], config) for n in p["n"]]
        case _: return [fullness_ratio_prob(n, p["alpha"], config) for n in p["n"]]


def _expectation(run: RunConfig, config: ForgeConfig) -> list[Report]:
    p = run.parameters
    match p["model"]:
        case "hardy-wright": return [hardy_wright_expectation(p["A"], p["from"], p["to"], config)]
        case model: return [expected_new_fermat_primes(p["from"], ExpectationModel(model), p["terms"], config)]


def _interval_req(run: RunConfig, config: ForgeConfig) -> list[Report]:
    p = run.parameters
    return [interval_requirement(p["x"], p["delta"], p["epsilon"], p["multiplier"], p["fermat_index"], p["alpha"], config)]


def _mersenne_census(run: RunConfig, config: ForgeConfig) -> list[Report]:
    p = run.parameters
    return [special_mersenne_expectation(p["a"], p["b"], p["X"], p["ll_limit"], config)]


def _mersenne_harmonic(run: RunConfig, config: ForgeConfig) -> list[Report]:
    return [mersenne_harmonic(X, config) for X in run.parameters["X"]]


def _mersenne_fullness(run: RunConfig, config: ForgeConfig) -> list[Report]:
    return [mersenne_fullness(p, config) for p in run.parameters["p"]]


def _ferma_t(run: RunConfig, config: ForgeConfig) -> list[Report]:
    limit = run.parameters["limit"]
    return [FermaTReport(limit=limit, primes=ferma_t_primes(limit, config))]


def _factorize(run: RunConfig, config: ForgeConfig) -> list[Report]:
    return [FactorizationReport(factorization=factorize(v, config)) for v in run.parameters["value"]]


def _order(run: RunConfig, config: ForgeConfig) -> list[Report]:
    return [OrderReport(order=order_of_two(p, config)) for p in run.parameters["p"]]


def _db_verify(run: RunConfig, config: ForgeConfig) -> list[Report]:
    return [db_verify(run.parameters["path"] or config.db_path, config)]


def _db_seed(run: RunConfig, config: ForgeConfig) -> list[Report]:
    added = FactorDatabase(config.db_path, config=config).seed()
    return [LedgerReport(action="seed", target=config.db_path, records=added)]


def _db_export(run: RunConfig, config: ForgeConfig) -> list[Report]:
    url = run.parameters["url"]
    records = FactorDatabase(config.db_path, config=config).snapshot()
    SqlFactorStore(config=StoreConfig(url=url)).upsert(records)
    log.info(f"{len(records)} record(s) mirrored to {url}")
    return [LedgerReport(action="export", target=url, records=list(records))]


# ? Parser ----------------------------------------------------------------------------

class UsageError(ForgeError):
    """Bad command line."""


class ForgeArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


_NUMBER = re.compile(r"^\s*(\d+)\s*(?:(\^|\*\*|e)\s*(\d+))?\s*([+-]\s*\d+)?\s*$")


def integer(text: str) -> int:
    """Integers as 641, 10^7, 2**33, 1e6 or 2^32+1."""
    m = _NUMBER.match(text)
    if not m: raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    base, op, exp, offset = m.groups()
    value = int(base)
    match op:
        case "^" | "**": value = value ** int(exp)
        case "e": value = value * 10 ** int(exp)
    return value + (int(offset.replace(" ", "")) if offset else 0)


def build_parser() -> ForgeArgumentParser:
    parser = ForgeArgumentParser(prog="fermat-forge", description="Fermat-number heuristics toolkit: factor search, primality tests, interval statistics and probability models.")
    parser.add_argument("--format", choices=["text", "csv"], default="text", help="report encoding (default: JSON lines)")
    parser.add_argument("--output", type=Path, default=None, help="write the report here instead of stdout")
    parser.add_argument("--seed", type=int, default=None, help="random seed for simulations (default: 0)")
    parser.add_argument("--workers", type=int, default=None, help="worker processes (default: FERMAT_FORGE_WORKERS or CPU count)")
    parser.add_argument("--bit-budget", type=integer, default=None, help="largest operand in bits (default: FERMAT_FORGE_BIT_BUDGET or 2^20)")
    parser.add_argument("--sieve-budget", type=integer, default=None, help="largest sieve bound (default: FERMAT_FORGE_SIEVE_BUDGET or 10^10)")
    parser.add_argument("--effort-budget", type=integer, default=None, help="Pollard-rho iterations per cofactor (default: 2*10^6)")
    parser.add_argument("--db", default=None, help="factor ledger path (default: FERMAT_FORGE_DB or fermat_factors.ndjson)")
    parser.add_argument("--precision", type=int, default=None, help="significant digits for heuristic sums (default: 50)")
    parser.add_argument("--timing", action="store_true", help="embed wall time in the run header (breaks byte-identical reruns)")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def command(name: str, handler: Callable, help: str, implements: str) -> ForgeArgumentParser:
        p = sub.add_parser(
            name, help=help, description=help, epilog=f"implements: {implements}",
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )
        p.set_defaults(handler=handler)
        return p

    p = command(
        "pepin", _pepin, "Pepin's test: F_n is prime iff 3^((F_n-1)/2) = -1 (mod F_n)",
        implements="Pepin's criterion for F_n, base 3",
    )
    p.add_argument("--n", type=int, required=True, help="Fermat index")
    p.add_argument("--to", type=int, default=None, help="sweep F_n .. F_to")

    p = command(
        "lucas-lehmer", _lucas_lehmer, "Lucas-Lehmer test of M_p = 2^p - 1",
        implements="Lucas-Lehmer criterion s_(p-2) = 0 (mod M_p)",
    )
    p.add_argument("--p", type=int, nargs="+", required=True, help="odd prime exponents")

    p = command(
        "trace", _trace, "residue trace 2, 2^2, 2^4, ... mod p; -1 at step r means p | F_r",
        implements="p divides F_r iff 2^(2^r) = -1 (mod p), found by repeated squaring",
    )
    p.add_argument("--p", type=integer, required=True, help="odd prime")
    p.add_argument("--max-steps", type=int, default=64, help="squarings before giving up")

    p = command(
        "factor-search", _factor_search, "repeated-squaring search for Proth primes k*2^m+1 dividing F_n (lists A/B procedure)",
        implements="search over primes k*2^m+1 with k small and m large, the source of list A",
    )
    p.add_argument("--n", type=int, default=None, help="single Fermat index (overrides --n-lo/--n-hi)")
    p.add_argument("--n-lo", type=int, default=5, help="first Fermat index")
    p.add_argument("--n-hi", type=int, default=32, help="last Fermat index")
    p.add_argument("--k-max", type=integer, default=DEFAULT_K_MAX, help="largest odd multiplier k")
    p.add_argument("--m-max", type=int, default=DEFAULT_M_MAX, help="largest exponent m")
    p.add_argument("--save", action="store_true", help="append found records to the factor ledger")

    p = command(
        "classify", _classify, "split Fermat indices into list A (factor known) and list B (none known)",
        implements="list A (a prime factor of F_n is known) against list B (nothing is known)",
    )
    p.add_argument("--n-lo", type=int, default=33, help="first Fermat index")
    p.add_argument("--n-hi", type=int, default=50, help="last Fermat index")

    p = command(
        "dubner-keller", _dubner_keller, "Dubner-Keller statistic: share of Proth primes k*2^m+1 dividing some F_n, against 1/k",
        implements="a prime k*2^m+1 (k odd) divides some Fermat number with probability 1/k",
    )
    p.add_argument("--k", type=int, nargs="+", default=[3, 5, 9], help="odd multipliers")
    p.add_argument("--m-lo", type=int, default=1, help="first exponent")
    p.add_argument("--m-hi", type=int, default=400, help="last exponent")

    p = command(
        "kfull-ratio", _kfull_ratio, "K-full integers against primes 1 mod K in [x-r, x+r], the ratio below 2",
        implements="#K-full / pi_1(K) on [x-r, x+r]: at most 2, and near 1 for small r",
    )
    p.add_argument("--x", type=integer, default=10**7, help="interval centre")
    p.add_argument("--K", type=integer, default=64, help="modulus K")
    p.add_argument("--r", type=integer, nargs="*", default=None, help="descending half-widths; x/10, x/100, x/1000 and (log x)^3 when omitted")

    p = command(
        "mertens", _mertens, "Mertens product prod_(p<=B) (1-1/p)^-1 against e^gamma log B",
        implements="Mertens' theorem prod_(p<=B) (1-1/p)^-1 ~ e^gamma log B",
    )
    p.add_argument("--B", type=integer, nargs="+", required=True, help="small-prime bounds")

    p = command(
        "selberg-window", _selberg_window, "short-interval prime counts in [t, t+y] for t in [x, 2x) against y/log t",
        implements="Selberg: pi(x+y) - pi(x) ~ y/log x for almost all x once y > log^(2+eps) x",
    )
    p.add_argument("--x", type=integer, required=True, help="start of the sampled range [x, 2x)")
    p.add_argument("--y", type=integer, required=True, help="window width")
    p.add_argument("--samples", type=int, default=200, help="windows sampled")
    p.add_argument("--epsilon", type=float, default=DEFAULT_TOLERANCE, help="relative tolerance around y/log t")
    p.add_argument("--multiplier", type=float, default=DEFAULT_MULTIPLIER, help="window threshold is multiplier * log^2 x")

    p = command(
        "second-moment", _second_moment, "second moment I(x,h,q) of psi-increments over classes mod q, with exceptional classes",
        implements="Prachar under GRH: I(x,h,q) = O(h x log^2(qx)), with O(phi(q)^2 log^2 x / h) exceptional classes",
    )
    p.add_argument("--x", type=integer, required=True, help="start of the range [x, 2x]")
    p.add_argument("--h", type=integer, required=True, help="window width")
    p.add_argument("--q", type=integer, required=True, help="modulus")
    p.add_argument("--step", type=integer, default=None, help="integration step; max(1, h/100) when omitted")
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE, help="absolute tolerance on each increment")
    p.add_argument("--exceptional-fraction", type=float, default=DEFAULT_EXCEPTIONAL_FRACTION, help="fail share that marks a class exceptional")

    p = command(
        "balls-cups", _balls_cups, "equidistribution lemma: B balls into C cups stay within (1 +- eps) B/C",
        implements="Equidistribution Lemma: B balls in C cups, each cup within (1 +- eps) B/C",
    )
    p.add_argument("--B", type=integer, required=True, help="balls")
    p.add_argument("--C", type=integer, required=True, help="cups")
    p.add_argument("--trials", type=int, default=1000, help="independent trials")
    p.add_argument("--epsilon", type=float, default=0.5, help="relative tolerance around B/C")

    p = command(
        "prob", _prob, "probability that F_n is prime: naive 2/log F_n, Mertens-adjusted, Hardy-Wright term or fullness ratio 4/2^n",
        implements="probability that F_n is prime: 2/log F_n, its Mertens adjustment, and the fullness-ratio bound pi_1(2^(2n)) / pi_1(2^(n+2))",
    )
    p.add_argument("--model", choices=["naive", "sieve-adjusted", "hardy-wright", "fullness-ratio"], default="fullness-ratio", help="probability model")
    p.add_argument("--n", type=int, nargs="+", required=True, help="Fermat indices")
    p.add_argument("--B", type=integer, default=2**20, help="small-divisor bound for sieve-adjusted")
    p.add_argument("--alpha", type=int, default=2, help="q = 2^(alpha n) for fullness-ratio")
    p.add_argument("--A", type=float, default=1.0, help="Hardy-Wright constant")

    p = command(
        "expectation", _expectation, "expected number of new Fermat primes (fullness ratio: 4/2^(n-1) < one billionth from n = 33)",
        implements="expected number of new Fermat primes: 4/2^33 + 4/2^34 + ... = 4/2^32, less than one-billionth",
    )
    p.add_argument("--model", choices=["fullness-ratio", "naive", "hardy-wright"], default="fullness-ratio", help="expectation model")
    p.add_argument("--from", type=int, default=33, dest="from", help="first index of the tail")
    p.add_argument("--to", type=int, default=None, help="last index for hardy-wright; unbounded when omitted")
    p.add_argument("--terms", type=int, default=DEFAULT_TERMS, help="terms summed before the closed-form tail")
    p.add_argument("--A", type=float, default=1.0, help="Hardy-Wright constant")

    p = command(
        "interval-req", _interval_req, "window widths (log x)^(1+delta+eps) and (log x)^(2+delta+eps) for equidistribution and uniformity",
        implements="window requirements r > (log x)^(1+delta+eps) and r > (log x)^(2+delta+eps)",
    )
    p.add_argument("--x", type=integer, default=None, help="scale (or use --fermat-index)")
    p.add_argument("--fermat-index", type=int, default=None, help="take x = F_n")
    p.add_argument("--delta", type=float, default=2.0, help="exponent delta")
    p.add_argument("--epsilon", type=float, default=0.1, help="exponent slack epsilon")
    p.add_argument("--multiplier", type=float, default=100.0, help="Selberg window multiplier")
    p.add_argument("--alpha", type=int, default=2, help="q = 2^(alpha n)")

    p = command(
        "mersenne-census", _mersenne_census, "primes p with ap+b prime, sum 1/(ap+b), and the Mersenne primes among them (twin: 1 2, Sophie Germain: 2 1)",
        implements="an upper bound of 1/(ap+b) per p gives a total expectation of O(1) special Mersenne primes",
    )
    p.add_argument("--a", type=int, required=True, help="multiplier a in ap+b")
    p.add_argument("--b", type=int, required=True, help="offset b in ap+b")
    p.add_argument("--X", type=integer, required=True, help="largest exponent p")
    p.add_argument("--ll-limit", type=int, default=2000, help="run Lucas-Lehmer on census members up to this")

    p = command(
        "mersenne-harmonic", _mersenne_harmonic, "sum 1/p for p <= X against log log X + Meissel-Mertens constant",
        implements="sum_(p<=X) 1/p diverges, so naive estimates suggest infinitely many Mersenne primes",
    )
    p.add_argument("--X", type=integer, nargs="+", required=True, help="bounds")

    p = command(
        "mersenne-fullness", _mersenne_fullness, "M_p is p-full: every prime divisor is 1 mod 2p",
        implements="every prime divisor of M_p is 1 mod 2p (M_p is 2p-full)",
    )
    p.add_argument("--p", type=int, nargs="+", required=True, help="prime exponents")

    p = command(
        "ferma-t", _ferma_t, "primes of the form 2^n + 1 (2 included)",
        implements="2^n + 1 can be prime only when n is a power of two (n = 0 gives 2)",
    )
    p.add_argument("--limit", type=int, default=32, help="largest n")

    p = command(
        "factorize", _factorize, "trial division then Pollard-Brent rho",
        implements="prime factorization behind K-full membership",
    )
    p.add_argument("--value", type=integer, nargs="+", required=True, help="e.g. 2^32+1")

    p = command(
        "order", _order, "multiplicative order of 2 mod p; a power 2^(n+1) means p | F_n",
        implements="every prime divisor of F_n is 1 mod 2^(n+1): ord_p(2) = 2^(n+1) iff p | F_n",
    )
    p.add_argument("--p", type=integer, nargs="+", required=True, help="odd primes")

    db = sub.add_parser("db", help="factor ledger maintenance")
    db_sub = db.add_subparsers(dest="db_command", required=True, metavar="ACTION")

    def action(name: str, handler: Callable, help: str, implements: str) -> ForgeArgumentParser:
        p = db_sub.add_parser(
            name, help=help, description=help, epilog=f"implements: {implements}",
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )
        p.set_defaults(handler=handler)
        return p

    p = action(
        "verify", _db_verify, "check the ledger checksum and re-trace every record",
        implements="every stored p = k*2^m+1 is prime and reaches -1 after n squarings of 2",
    )
    p.add_argument("--path", default=None, help="ledger to check; --db when omitted")
    action(
        "seed", _db_seed, "append the published small-k factors, re-verified",
        implements="the known factors behind lists A and B, starting with 641 | F_5",
    )
    p = action("export", _db_export, "mirror the ledger into a SQL database", implements="factor ledger mirrored to SQL")
    p.add_argument("--url", default=StoreConfig().url, help="SQLAlchemy URL")
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    env = ForgeConfig.from_env(
        bit_budget=args.bit_budget, sieve_budget=args.sieve_budget, effort_budget=args.effort_budget,
        workers=args.workers, db_path=args.db, precision=args.precision, seed=args.seed,
    )
    name = args.command + (f" {args.db_command}" if getattr(args, "db_command", None) else "")
    return RunConfig(
        subcommand=name,
        parameters={k: v for k, v in vars(args).items() if k not in GLOBAL_FLAGS},
        format=args.format, seed=args.seed,
        bit_budget=env.bit_budget, sieve_budget=env.sieve_budget, effort_budget=env.effort_budget,
        workers=env.workers, db_path=env.db_path, precision=env.precision,
    )


def _fail(code: int, message: str) -> int:
    print(red(message) if sys.stderr.isatty() else message, file=sys.stderr)
    return code


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e: return _fail(EXIT_USAGE, f"usage error: {e}")
    except SystemExit as e: return int(e.code or 0)  # ^ --help

    configure(logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO)
    try:
        config = _run_config(args)
        header, reports = run(config, args.handler, timing=args.timing)
    except ResourceError as e: return _fail(EXIT_RESOURCE, f"refused: {e}")
    except IncompleteFactorization as e: return _fail(EXIT_RESOURCE, f"refused: {e}")
    except VerificationError as e: return _fail(EXIT_VERIFY, f"verification failed: {e}")
    except (DomainError, ValidationError, ValueError, ForgeError) as e:
        return _fail(EXIT_USAGE, f"error: {str(e).splitlines()[0]}")

    text = render([header, *reports], config.format)
    match args.output:
        case None: sys.stdout.write(text)
        case path: path.write_text(text)

    failed = [r for r in reports if isinstance(r, DbVerifyReport) and not r.passed]
    if failed: return _fail(EXIT_VERIFY, f"{sum(r.failures for r in failed)} record(s) failed verification")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
