import json

import pytest

from fermat_forge.cli import EXIT_OK, EXIT_RESOURCE, EXIT_USAGE, EXIT_VERIFY, integer, main
from fermat_forge.db import PUBLISHED_FACTORS, write_ledger
from fermat_forge.fermat import FactorRecord


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for var in ("FERMAT_FORGE_BIT_BUDGET", "FERMAT_FORGE_SIEVE_BUDGET", "FERMAT_FORGE_WORKERS", "FERMAT_FORGE_DB"):
        monkeypatch.delenv(var, raising=False)


def lines(capsys) -> list[dict]:
    return [json.loads(line) for line in capsys.readouterr().out.splitlines()]


@pytest.mark.parametrize("text,value", [("641", 641), ("10^7", 10**7), ("2**33", 2**33), ("1e6", 10**6), ("2^32+1", 2**32 + 1)])
def test_integer_arguments(text, value):
    assert integer(text) == value


def test_pepin_reports_composite(capsys):
    assert main(["pepin", "--n", "5"]) == EXIT_OK
    header, report = lines(capsys)
    assert header["kind"] == "run" and header["subcommand"] == "pepin"
    assert header["parameters"] == {"n": 5, "to": None}
    assert report["subject"] == "F_5" and report["verdict"]["status"] == "composite"


def test_pepin_sweep(capsys):
    assert main(["pepin", "--n", "1", "--to", "6"]) == EXIT_OK
    verdicts = [r["verdict"]["status"] for r in lines(capsys)[1:]]
    assert verdicts == ["prime"] * 4 + ["composite"] * 2


def test_reruns_are_byte_identical(capsys):
    argv = ["--seed", "7", "balls-cups", "--B", "500", "--C", "10", "--trials", "20"]
    assert main(argv) == EXIT_OK
    first = capsys.readouterr().out
    assert main(argv) == EXIT_OK
    assert capsys.readouterr().out == first
    assert '"wall_time":null' in first


def test_seed_is_recorded(capsys):
    main(["--seed", "3", "selberg-window", "--x", "10^5", "--y", "500", "--samples", "10"])
    header, report = lines(capsys)
    assert header["seed"] == 3 and report["seed"] == 3
    assert len(report["windows"]) == 10


def test_timing_adds_wall_time(capsys):
    main(["--timing", "ferma-t"])
    header, report = lines(capsys)
    assert header["wall_time"] is not None
    assert [p["n"] for p in report["primes"]] == [0, 1, 2, 4, 8, 16]


def test_expectation_fullness_ratio(capsys):
    assert main(["expectation", "--model", "fullness-ratio", "--from", "33"]) == EXIT_OK
    report = lines(capsys)[1]
    assert report["closed_form"] == "1/1073741824"
    assert report["below_threshold"] is True


def test_single_cup_gets_every_ball(capsys):
    assert main(["balls-cups", "--C", "1", "--B", "7", "--trials", "3"]) == EXIT_OK
    assert lines(capsys)[1]["epsilon_pass_fraction"] == 1


def test_factor_search_then_trace(capsys):
    assert main(["--workers", "1", "factor-search", "--n", "5", "--k-max", "5", "--m-max", "7"]) == EXIT_OK
    report = lines(capsys)[1]
    assert [r["p"] for r in report["records"]] == ["641"]

    assert main(["trace", "--p", "641"]) == EXIT_OK
    assert lines(capsys)[1]["trace"]["hit_index"] == 5


def test_csv_format(capsys):
    assert main(["--format", "csv", "factorize", "--value", "2^32+1"]) == EXIT_OK
    out = capsys.readouterr().out
    header, body = out.split("\n\n")
    assert header.startswith("subcommand,version,format,seed,parameters")
    assert body.splitlines() == ["prime,exponent", "641,1", "6700417,1"]


def test_output_file(tmp_path, capsys):
    target = tmp_path / "out.jsonl"
    assert main(["--output", str(target), "order", "--p", "641"]) == EXIT_OK
    assert capsys.readouterr().out == ""
    report = json.loads(target.read_text().splitlines()[1])
    assert report["order"]["order"] == 64 and report["order"]["fermat_index"] == 5


@pytest.mark.parametrize(
    "argv",
    [
        ["no-such-command"],
        ["pepin"],
        ["kfull-ratio", "--x", "abc"],
        ["--format", "xml", "pepin", "--n", "5"],
    ],
)
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_domain_errors_exit_one(capsys):
    assert main(["lucas-lehmer", "--p", "9"]) == EXIT_USAGE
    assert main(["mersenne-census", "--a", "0", "--b", "3", "--X", "100"]) == EXIT_USAGE
    assert capsys.readouterr().out == ""


def test_budget_refusal_exits_two(capsys):
    assert main(["pepin", "--n", "25"]) == EXIT_RESOURCE
    assert "bit_budget" in capsys.readouterr().err
    assert main(["--sieve-budget", "10^6", "mertens", "--B", "10^7"]) == EXIT_RESOURCE


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "factor-search" in capsys.readouterr().out


SUBCOMMANDS = [
    ["pepin"], ["lucas-lehmer"], ["trace"], ["factor-search"], ["classify"], ["dubner-keller"],
    ["kfull-ratio"], ["mertens"], ["selberg-window"], ["second-moment"], ["balls-cups"], ["prob"],
    ["expectation"], ["interval-req"], ["mersenne-census"], ["mersenne-harmonic"], ["mersenne-fullness"],
    ["ferma-t"], ["factorize"], ["order"], ["db", "verify"], ["db", "seed"], ["db", "export"],
]


@pytest.mark.parametrize("command", SUBCOMMANDS, ids=" ".join)
def test_every_subcommand_help_names_what_it_implements(command, capsys):
    assert main([*command, "--help"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "implements:" in out
    assert "usage: fermat-forge " + " ".join(command) in out


def test_subcommand_help_lists_defaults(capsys):
    main(["factor-search", "--help"])
    out = capsys.readouterr().out
    assert "(default: 5)" in out and "(default: 32)" in out
    main(["db", "export", "--help"])
    assert "sqlite:///fermat_factors.sqlite" in capsys.readouterr().out


def test_db_verify_exit_codes(f5_ledger, tmp_path, capsys):
    assert main(["db", "verify", "--path", str(f5_ledger)]) == EXIT_OK
    assert lines(capsys)[1]["record_count"] == 1

    tampered = tmp_path / "tampered.ndjson"
    write_ledger(tampered, [FactorRecord(n=5, k=5, m=7, p=643, verified=True)])
    assert main(["db", "verify", "--path", str(tampered)]) == EXIT_VERIFY

    corrupt = tmp_path / "corrupt.ndjson"
    corrupt.write_bytes(f5_ledger.read_bytes().replace(b'"641"', b'"643"'))
    assert main(["db", "verify", "--path", str(corrupt)]) == EXIT_VERIFY
    assert "verification failed" in capsys.readouterr().err


def test_db_verify_missing_ledger(tmp_path):
    assert main(["db", "verify", "--path", str(tmp_path / "missing.ndjson")]) == EXIT_USAGE


def test_seed_classify_export(ledger, tmp_path, capsys):
    assert main(["--db", str(ledger), "db", "seed"]) == EXIT_OK
    assert len(lines(capsys)[1]["records"]) == len(PUBLISHED_FACTORS)

    assert main(["--db", str(ledger), "classify", "--n-lo", "33", "--n-hi", "50"]) == EXIT_OK
    assert lines(capsys)[1]["list_a"] == [36, 37, 38, 39, 42, 43]

    url = f"sqlite:///{tmp_path / 'mirror.sqlite'}"
    assert main(["--db", str(ledger), "db", "export", "--url", url]) == EXIT_OK
    report = lines(capsys)[1]
    assert report["action"] == "export" and len(report["records"]) == len(PUBLISHED_FACTORS)


def test_db_path_from_environment(ledger, monkeypatch, capsys):
    monkeypatch.setenv("FERMAT_FORGE_DB", str(ledger))
    assert main(["db", "seed"]) == EXIT_OK
    assert ledger.exists()
    assert lines(capsys)[0]["config"]["db_path"] == str(ledger)


def test_factor_search_save(ledger, capsys):
    argv = ["--db", str(ledger), "--workers", "1", "factor-search", "--n", "5", "--k-max", "5", "--m-max", "7", "--save"]
    assert main(argv) == EXIT_OK
    assert main(["db", "verify", "--path", str(ledger)]) == EXIT_OK
    assert lines(capsys)[-1]["record_count"] == 1
