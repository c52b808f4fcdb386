"""
Factor database: an append-only newline-delimited ledger of FactorRecords
closed by a checksum line, plus an optional SQL mirror through SQLAlchemy.

Ledger lines (field order fixed):
    {"n":5,"k":5,"m":7,"p":"641","method":"proth-trace","verified":true,"timestamp":"..."}
    ...
    {"checksum":"sha256:<hex of every preceding byte>","count":<records>}
"""
import hashlib
import json
import os
import tempfile
import threading
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Generator, Iterable, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError
from sqlalchemy import BigInteger, Boolean, Integer, String, select
from sqlalchemy.engine import Engine, create_engine
from sqlalchemy.orm import DeclarativeBase, Mapped, Session, mapped_column, sessionmaker

from fermat_forge.fermat import FactorRecord, verify_record
from fermat_forge.report import Report
from fermat_forge.utils import DEFAULT_CONFIG, DomainError, ForgeConfig, VerificationError
from fermat_forge.utils.log import get_logger

log = get_logger(__name__)

LEDGER_FIELDS = ("n", "k", "m", "p", "method", "verified", "timestamp")

# * (n, k, m): published factors of F_5, F_6 and list (A) members with small k
PUBLISHED_FACTORS: tuple[tuple[int, int, int], ...] = (
    (5, 5, 7),
    (5, 52347, 7),
    (6, 1071, 8),
    (6, 262814145745, 8),
    (36, 5, 39),
    (37, 1275438465, 39),
    (38, 3, 41),
    (39, 2212980863, 41),
    (42, 1985, 44),
    (43, 212675, 45),
)


def _encode(record: FactorRecord) -> bytes:
    data = record.model_dump(mode="json")
    return (json.dumps({f: data[f] for f in LEDGER_FIELDS}, separators=(",", ":")) + "\n").encode()


def _checksum_line(body: bytes, count: int) -> bytes:
    digest = hashlib.sha256(body).hexdigest()
    return (json.dumps({"checksum": f"sha256:{digest}", "count": count}, separators=(",", ":")) + "\n").encode()


def parse_ledger(data: bytes) -> list[FactorRecord]:
    """Decode ledger bytes; any structural defect raises VerificationError with its byte offset."""
    if not data: return []
    body_end = data.rstrip(b"\n").rfind(b"\n") + 1
    body, tail = data[:body_end], data[body_end:]
    try:
        trailer = json.loads(tail)
    except json.JSONDecodeError:
        raise VerificationError("ledger has no checksum line", offset=body_end)
    if not isinstance(trailer, dict) or "checksum" not in trailer:
        raise VerificationError("ledger has no checksum line", offset=body_end)
    if trailer["checksum"] != f"sha256:{hashlib.sha256(body).hexdigest()}":
        raise VerificationError("ledger checksum mismatch", offset=body_end)

    records: list[FactorRecord] = []
    seen: set[tuple[int, int]] = set()
    offset = 0
    for line in body.splitlines(keepends=True):
        try:
            record = FactorRecord(**json.loads(line))
        except (json.JSONDecodeError, ValidationError, TypeError) as e:
            raise VerificationError(f"malformed record: {e.__class__.__name__}", offset=offset)
        if record.key in seen: raise VerificationError(f"duplicate record F_{record.n}/{record.p}", offset=offset)
        seen.add(record.key)
        records.append(record)
        offset += len(line)
    if trailer.get("count", len(records)) != len(records):
        raise VerificationError("record count disagrees with checksum line", offset=body_end)
    return records


def write_ledger(path: Path, records: Iterable[FactorRecord]) -> None:
    """Atomically replace the ledger at `path` with `records` and a fresh checksum."""
    records = list(records)
    body = b"".join(_encode(r) for r in records)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "wb") as fh:
        fh.write(body + _checksum_line(body, len(records)))
    os.replace(tmp, path)


class FactorDatabase:
    """
    Append-only collection of FactorRecords keyed by (n, p). Writes are
    serialized by a lock; readers get tuple snapshots. Records that fail
    re-verification on load are kept but flagged.
    """

    def __init__(self, path: str | Path, verify: bool = True, config: ForgeConfig = DEFAULT_CONFIG):
        self.path = Path(path)
        self.config = config
        self._lock = threading.Lock()
        self._records: tuple[FactorRecord, ...] = ()
        self.flagged: dict[tuple[int, int], str] = {}
        if self.path.exists():
            self._records = tuple(parse_ledger(self.path.read_bytes()))
            if verify: self.reverify()

    def __len__(self) -> int: return len(self._records)

    def snapshot(self) -> tuple[FactorRecord, ...]: return self._records

    def is_trusted(self, record: FactorRecord) -> bool:
        return record.verified and record.key not in self.flagged

    def reverify(self) -> dict[tuple[int, int], Optional[str]]:
        """Re-run verification on every record; returns key -> failure reason (None = pass)."""
        results = {r.key: verify_record(r, self.config) for r in self._records}
        self.flagged = {k: why for k, why in results.items() if why is not None}
        for (n, p), why in self.flagged.items():
            log.warning(f"record F_{n}/{p} flagged: {why}")
        return results

    def append(self, records: Iterable[FactorRecord]) -> list[FactorRecord]:
        """Add records not already present; returns those actually added."""
        with self._lock:
            keys = {r.key for r in self._records}
            stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
            added = []
            for record in records:
                if record.key in keys: continue
                keys.add(record.key)
                added.append(record if record.timestamp else record.model_copy(update={"timestamp": stamp}))
            if added:
                write_ledger(self.path, (*self._records, *added))
                self._records = (*self._records, *added)
                log.info(f"{len(added)} record(s) appended to {self.path}")
            return added

    def seed(self) -> list[FactorRecord]:
        """Append the published small-k factors, each verified before it is marked so."""
        seeds = []
        for n, k, m in PUBLISHED_FACTORS:
            record = FactorRecord.of(n, k, m, method="published")
            why = verify_record(record, self.config)
            if why: log.warning(f"published factor F_{n}/{record.p} failed verification: {why}")
            seeds.append(record.model_copy(update={"verified": why is None}))
        return self.append(seeds)


# ? Verification report ----------------------------------------------------------------

class RecordCheck(BaseModel):
    n: int
    p: str
    passed: bool
    reason: Optional[str] = None

    model_config = ConfigDict(frozen=True)


class DbVerifyReport(Report):
    KIND = "db_verify"
    CSV_COLUMNS = ("n", "p", "passed", "reason")

    path: str
    checksum_ok: bool
    record_count: int
    failures: int
    checks: list[RecordCheck] = Field(default_factory=list)

    @property
    def passed(self) -> bool: return self.checksum_ok and self.failures == 0

    def csv_rows(self):
        return [c.model_dump(mode="json") for c in self.checks]


def db_verify(path: str | Path, config: ForgeConfig = DEFAULT_CONFIG) -> DbVerifyReport:
    """Check the ledger checksum (hard failure) and re-trace every record."""
    path = Path(path)
    if not path.exists(): raise DomainError(f"no factor ledger at {path}")
    db = FactorDatabase(path, verify=False, config=config)
    results = db.reverify()
    checks = [RecordCheck(n=r.n, p=str(r.p), passed=results[r.key] is None, reason=results[r.key]) for r in db.snapshot()]
    return DbVerifyReport(
        path=str(path), checksum_ok=True, record_count=len(checks),
        failures=sum(not c.passed for c in checks), checks=checks,
    )


# ? SQL mirror -------------------------------------------------------------------------

class Base(DeclarativeBase):
    pass


class FactorRow(Base):
    __tablename__ = "fermat_factors"

    n: Mapped[int] = mapped_column(Integer, primary_key=True)
    p: Mapped[str] = mapped_column(String, primary_key=True)  # * decimal; exceeds 64 bits
    k: Mapped[int] = mapped_column(BigInteger)
    m: Mapped[int] = mapped_column(Integer)
    method: Mapped[str] = mapped_column(String)
    verified: Mapped[bool] = mapped_column(Boolean)
    timestamp: Mapped[Optional[str]] = mapped_column(String, nullable=True)

    def to_record(self) -> FactorRecord:
        return FactorRecord(n=self.n, k=self.k, m=self.m, p=int(self.p), method=self.method, verified=self.verified, timestamp=self.timestamp)


class StoreConfig(BaseModel):
    """SQL mirror connection settings."""
    url: str = Field(default="sqlite:///fermat_factors.sqlite", description="SQLAlchemy database URL")
    echo: bool = False

    model_config = ConfigDict(frozen=True)


class SqlFactorStore(BaseModel):
    """Mirrors the ledger into a SQL table so factor data can be queried with SQL tools."""
    config: StoreConfig = Field(default_factory=StoreConfig)
    engine: Engine = Field(default=None)
    SessionLocal: sessionmaker = Field(default=None)

    model_config = ConfigDict(arbitrary_types_allowed=True)

    def __init__(self, **data):
        super().__init__(**data)
        self.engine = create_engine(self.config.url, echo=self.config.echo)
        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=self.engine)
        Base.metadata.create_all(self.engine)

    @contextmanager
    def get_session(self) -> Generator[Session, None, None]:
        """Context manager for database sessions."""
        session: Session = self.SessionLocal()
        try:
            yield session
            session.commit()
        except Exception:
            session.rollback()
            raise
        finally: session.close()

    def upsert(self, records: Iterable[FactorRecord]) -> int:
        count = 0
        with self.get_session() as session:
            for r in records:
                session.merge(FactorRow(n=r.n, p=str(r.p), k=r.k, m=r.m, method=r.method, verified=r.verified, timestamp=r.timestamp))
                count += 1
        return count

    def load(self) -> list[FactorRecord]:
        with self.get_session() as session:
            rows = session.scalars(select(FactorRow).order_by(FactorRow.n, FactorRow.m, FactorRow.k)).all()
            return [row.to_record() for row in rows]
