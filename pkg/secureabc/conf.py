import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

from dataclasses_json import DataClassJsonMixin
from toml import dump, load

from secureabc.defaults import (
    DEFAULT_CONFIG_PATH,
    DEFAULT_DP_EPSILON,
    DEFAULT_DP_K,
    DEFAULT_REV_V_MAX_AGE,
    DEFAULT_SESSION_TTL,
    DEFAULT_SS_PRIME_ID,
    DEFAULT_VALIDITY_DAYS,
    MAX_CLOCK_SKEW,
)
from secureabc.errors import ParameterError

logger = logging.getLogger(__name__)


@dataclass
class SecureABCSettings(DataClassJsonMixin):
    """Settings class for SecureABC.

    Attributes
    ----------
    validity_days : int
        Lifetime of newly issued certificates.
    rev_v_max_age : int
        Seconds after which a holder treats its verifier revocation list as stale.
    session_ttl : int
        Seconds between accepting a verifier and releasing the encrypted certificate.
    clock_skew : int
        Tolerance in seconds on validity dates, at most 300.
    accept_issuer_signed_verifiers : bool
        Let holders accept verifier credentials signed by a root-endorsed issuer.
    reporting_period : str
        Token aggregation period, ``day`` or ``week``.
    dp_k : int
        Number of risk levels for randomized tokens.
    dp_epsilon : float
        Privacy budget for randomized tokens.
    estimator : str
        ``unbiased`` or ``paper_eq1``.
    ss_prime_id : int
        Modulus of secret-shared tokens.
    log_level : str
        Level used when no ``--verbose`` flag is given.
    """

    validity_days: int = DEFAULT_VALIDITY_DAYS
    rev_v_max_age: int = DEFAULT_REV_V_MAX_AGE
    session_ttl: int = DEFAULT_SESSION_TTL
    clock_skew: int = 0
    accept_issuer_signed_verifiers: bool = False
    reporting_period: Literal["day", "week"] = "day"
    dp_k: int = DEFAULT_DP_K
    dp_epsilon: float = DEFAULT_DP_EPSILON
    estimator: Literal["unbiased", "paper_eq1"] = "unbiased"
    ss_prime_id: int = DEFAULT_SS_PRIME_ID
    log_level: str = "WARNING"

    def __post_init__(self):
        if not 0 <= self.clock_skew <= MAX_CLOCK_SKEW:
            raise ParameterError(f"clock_skew must lie in 0..{MAX_CLOCK_SKEW}")
        if self.reporting_period not in ("day", "week"):
            raise ParameterError(f"unknown reporting period {self.reporting_period!r}")
        if self.estimator not in ("unbiased", "paper_eq1"):
            raise ParameterError(f"unknown estimator {self.estimator!r}")


@dataclass
class SecureABCConfig(DataClassJsonMixin):
    """Configuration class for SecureABC.

    Attributes
    ----------
    Settings : SecureABCSettings
        The settings for SecureABC.
    """

    Settings: SecureABCSettings = field(default_factory=lambda: SecureABCSettings())

    @classmethod
    def load(cls, filename: Path | str):
        """Load the configuration file.

        Parameters
        ----------
        filename : Path | str
            The configuration file path.
        """
        filename = Path(filename)
        with filename.open("r") as f:
            config = load(f)
        return cls.from_dict(config)

    def save(self, filename: Path | str) -> None:
        """Write the configuration file, creating its directory.

        Parameters
        ----------
        filename : Path | str
            The configuration file path.
        """
        filename = Path(filename)
        filename.parent.mkdir(parents=True, exist_ok=True)
        with filename.open("w") as f:
            dump(self.to_dict(encode_json=True), f)


# Use Configuration file path, if not set in environment variable
CONFIG_PATH = Path(os.environ.get("SECUREABC_CONFIG_PATH", str(DEFAULT_CONFIG_PATH)))

# Fall back to defaults when no configuration file exists; `secureabc-cli config init` writes one
if CONFIG_PATH.exists():
    CONFIG = SecureABCConfig.load(CONFIG_PATH)
else:
    logger.debug("configuration file not found at %s, using defaults", CONFIG_PATH)
    CONFIG = SecureABCConfig()
