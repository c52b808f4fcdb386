import os
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from fermat_forge.utils.errors import ResourceError


class ForgeConfig(BaseModel):
    """Budgets and knobs shared by every module. Values are immutable once built."""
    bit_budget: int = Field(default=2**20, ge=64, description="Largest operand size in bits; F_n fits when 2^n does")
    sieve_budget: int = Field(default=10**10, ge=100, description="Largest bound any sieve may reach")
    effort_budget: int = Field(default=2_000_000, ge=1, description="Pollard-rho iterations per cofactor")
    trial_bound: int = Field(default=2**20, ge=2, description="Trial division bound before rho")
    workers: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    db_path: str = Field(default="fermat_factors.ndjson", description="Factor ledger location")
    precision: int = Field(default=50, ge=15, description="Significant decimal digits for heuristic sums")
    seed: int = Field(default=0, ge=0)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @classmethod
    def from_env(cls, **overrides) -> "ForgeConfig":
        """Build a config from FERMAT_FORGE_* environment variables plus explicit overrides."""
        env: dict[str, object] = {}
        for key, var, cast in (
            ("bit_budget", "FERMAT_FORGE_BIT_BUDGET", int),
            ("sieve_budget", "FERMAT_FORGE_SIEVE_BUDGET", int),
            ("workers", "FERMAT_FORGE_WORKERS", int),
            ("db_path", "FERMAT_FORGE_DB", str),
        ):
            value: Optional[str] = os.environ.get(var)
            if value: env[key] = cast(value)
        env.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**env)

    def check_bits(self, what: str, bits: int) -> None:
        if bits > self.bit_budget:
            raise ResourceError(what, bits, "bit_budget", self.bit_budget)

    def check_sieve(self, what: str, bound: int) -> None:
        if bound > self.sieve_budget:
            raise ResourceError(what, bound, "sieve_budget", self.sieve_budget)


DEFAULT_CONFIG = ForgeConfig(workers=1)
