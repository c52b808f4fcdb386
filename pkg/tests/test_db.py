import json

import pytest

from fermat_forge.db import (
    PUBLISHED_FACTORS,
    FactorDatabase,
    SqlFactorStore,
    StoreConfig,
    db_verify,
    parse_ledger,
    write_ledger,
)
from fermat_forge.fermat import FactorRecord
from fermat_forge.utils import DomainError, VerificationError


def test_ledger_layout(f5_ledger):
    lines = f5_ledger.read_bytes().decode().splitlines()
    assert len(lines) == 2
    assert list(json.loads(lines[0])) == ["n", "k", "m", "p", "method", "verified", "timestamp"]
    trailer = json.loads(lines[1])
    assert trailer["count"] == 1 and trailer["checksum"].startswith("sha256:")


def test_empty_ledger(ledger):
    write_ledger(ledger, [])
    assert parse_ledger(ledger.read_bytes()) == []
    assert parse_ledger(b"") == []


def test_checksum_mismatch_reports_offset(f5_ledger):
    data = f5_ledger.read_bytes().replace(b'"641"', b'"643"')
    with pytest.raises(VerificationError, match="byte offset"):
        parse_ledger(data)


def test_missing_checksum_line(f5_record):
    line = json.dumps(f5_record.model_dump(mode="json")).encode() + b"\n"
    with pytest.raises(VerificationError, match="checksum"):
        parse_ledger(line + line)


def test_duplicates_rejected(ledger, f5_record):
    write_ledger(ledger, [f5_record, f5_record])
    with pytest.raises(VerificationError, match="duplicate"):
        FactorDatabase(ledger)


def test_append_dedups_and_stamps(ledger, f5_record):
    db = FactorDatabase(ledger)
    assert len(db.append([f5_record])) == 1
    assert db.append([f5_record]) == []
    assert len(db) == 1
    assert db.snapshot()[0].timestamp is not None
    reopened = FactorDatabase(ledger)
    assert reopened.snapshot() == db.snapshot()
    assert reopened.flagged == {}


def test_seed_verifies_published_factors(ledger, config):
    db = FactorDatabase(ledger, config=config)
    added = db.seed()
    assert len(added) == len(PUBLISHED_FACTORS)
    assert all(r.verified and r.method == "published" for r in added)
    assert {r.p for r in added if r.n == 5} == {641, 6700417}
    assert db.seed() == []


def test_reverify_flags_bad_records(ledger, config):
    write_ledger(ledger, [FactorRecord.of(5, 5, 7, verified=True), FactorRecord(n=5, k=5, m=7, p=643, verified=True)])
    db = FactorDatabase(ledger, config=config)
    assert list(db.flagged) == [(5, 643)]
    assert not db.is_trusted(db.snapshot()[1])
    assert db.is_trusted(db.snapshot()[0])


def test_db_verify_reports(f5_ledger, ledger, config):
    report = db_verify(f5_ledger, config)
    assert report.passed and report.record_count == 1

    write_ledger(ledger, [FactorRecord(n=5, k=5, m=7, p=643, verified=True)])
    report = db_verify(ledger, config)
    assert not report.passed and report.failures == 1
    assert report.checks[0].reason == "p != k*2^m + 1"


def test_db_verify_empty_and_missing(ledger, tmp_path, config):
    write_ledger(ledger, [])
    report = db_verify(ledger, config)
    assert report.passed and report.record_count == 0
    with pytest.raises(DomainError):
        db_verify(tmp_path / "nope.ndjson", config)


def test_sql_mirror_round_trip(tmp_path, ledger, config):
    db = FactorDatabase(ledger, config=config)
    db.seed()
    store = SqlFactorStore(config=StoreConfig(url=f"sqlite:///{tmp_path / 'factors.sqlite'}"))
    assert store.upsert(db.snapshot()) == len(PUBLISHED_FACTORS)
    store.upsert(db.snapshot())
    loaded = store.load()
    assert len(loaded) == len(PUBLISHED_FACTORS)
    assert {r.key for r in loaded} == {r.key for r in db.snapshot()}
    assert loaded[0].n == 5
