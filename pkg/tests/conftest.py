from pathlib import Path

import pytest

from fermat_forge.db import write_ledger
from fermat_forge.fermat import FactorRecord
from fermat_forge.utils import ForgeConfig


@pytest.fixture
def config() -> ForgeConfig:
    """Single worker, budgets small enough that nothing slow slips through."""
    return ForgeConfig(workers=1, sieve_budget=10**8, bit_budget=2**16)


@pytest.fixture
def f5_record() -> FactorRecord:
    return FactorRecord.of(5, 5, 7, method="proth-trace", verified=True)


@pytest.fixture
def ledger(tmp_path: Path) -> Path:
    return tmp_path / "factors.ndjson"


@pytest.fixture
def f5_ledger(ledger: Path, f5_record: FactorRecord) -> Path:
    write_ledger(ledger, [f5_record])
    return ledger
