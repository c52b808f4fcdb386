from fermat_forge.utils.config import DEFAULT_CONFIG, ForgeConfig
from fermat_forge.utils.errors import (
    DomainError,
    ForgeError,
    IncompleteFactorization,
    ResourceError,
    VerificationError,
)


# * TEXT FORMATTING
bold = lambda x: f"\033[1m{x}\033[0m"
# * COLORS
gray = lambda x: f"\033[90m{x}\033[0m"
yellow = lambda x: f"\033[33m{x}\033[0m"
red = lambda x: f"\033[31m{x}\033[0m"
