"""Randomized health tokens.

A holder's true risk level ``i_true`` in ``{0..k-1}`` is kept with probability ``(e^ε - 1) / (e^ε + k - 1)`` and
otherwise replaced by a uniform draw, so any output is reported with probability at least
``q = 1 / (e^ε + k - 1)`` and the truth with ``e^ε·q``. Verifiers count the signed randomized values per reporting
period and invert the channel to estimate the population's risk frequencies.
"""

import json
import logging
import math
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
from dataclasses_json import DataClassJsonMixin
from pandas import DataFrame

from .cert_model import DpToken, reporting_period
from .crypto_core import fingerprint, public_key_from_private, sign, verify
from .defaults import DEFAULT_DP_EPSILON, DEFAULT_DP_K
from .errors import BadSignature, DuplicateToken, Expired, NotYetValid, ParameterError

logger = logging.getLogger(__name__)


class Estimator(str, Enum):
    UNBIASED = "unbiased"
    PAPER_EQ1 = "paper_eq1"


@dataclass(frozen=True)
class DpParams(DataClassJsonMixin):
    """Randomized-response parameters.

    Attributes
    ----------
    k : int
        Number of risk levels, at least 2.
    epsilon : float
        Privacy budget, positive.
    """

    k: int = DEFAULT_DP_K
    epsilon: float = DEFAULT_DP_EPSILON

    def __post_init__(self):
        if self.k < 2:
            raise ParameterError(f"k must be at least 2, got {self.k}")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ParameterError(f"epsilon must be positive and finite, got {self.epsilon}")

    @property
    def scale(self) -> float:
        """``e^ε + k - 1``."""
        return math.exp(self.epsilon) + self.k - 1

    @property
    def keep_probability(self) -> float:
        return math.expm1(self.epsilon) / self.scale

    @property
    def q(self) -> float:
        """Probability of reporting any particular level other than the truth."""
        return 1 / self.scale

    @property
    def truth_probability(self) -> float:
        return math.exp(self.epsilon) / self.scale

    def pmf(self, i_true: int) -> np.ndarray:
        """Output distribution of the mechanism for input ``i_true``."""
        _check_level(i_true, self.k)
        probabilities = np.full(self.k, self.q)
        probabilities[i_true] = self.truth_probability
        return probabilities

    def channel(self) -> np.ndarray:
        """``k × k`` matrix whose row ``i`` is ``pmf(i)``."""
        return np.array([self.pmf(i) for i in range(self.k)])


def _check_level(value: int, k: int) -> None:
    if not 0 <= value < k:
        raise ParameterError(f"risk level {value} outside 0..{k - 1}")


def randomize_response(i_true: int, params: DpParams, rng: np.random.Generator) -> int:
    """Keep ``i_true`` with the keep probability, otherwise answer uniformly at random.

    Raises
    ------
    ParameterError
        If ``i_true`` is not a level in ``0..k-1``.
    """
    _check_level(i_true, params.k)
    if rng.random() < params.keep_probability:
        return int(i_true)
    return int(rng.integers(params.k))


def randomize_responses(values: np.ndarray, params: DpParams, rng: np.random.Generator) -> np.ndarray:
    """Vectorized :func:`randomize_response` over an array of true levels."""
    values = np.asarray(values, dtype=np.int64)
    if values.size and (values.min() < 0 or values.max() >= params.k):
        raise ParameterError(f"risk levels must lie in 0..{params.k - 1}")
    keep = rng.random(values.shape) < params.keep_probability
    uniform = rng.integers(0, params.k, size=values.shape)
    return np.where(keep, values, uniform)


def issue_dp_token(
    sk_h: bytes,
    i_true: int,
    params: DpParams,
    date_issue: int,
    date_end: int,
    rng: np.random.Generator,
) -> tuple[DpToken, int]:
    """Issue token_DP carrying a randomized risk level.

    Returns
    -------
    tuple[DpToken, int]
        The signed token and, for the holder, the true level.
    """
    unsigned = DpToken(
        date_issue=date_issue,
        date_end=date_end,
        issuer_key_id=fingerprint(public_key_from_private(sk_h)),
        i_dp=randomize_response(i_true, params, rng),
        k=params.k,
        epsilon=params.epsilon,
    )
    token = replace(unsigned, signature=sign(sk_h, unsigned.signed_bytes(), deterministic=False))
    logger.info("issued randomized token %s", token.token_id[:8].hex())
    return token, i_true


def verify_dp_token(token: DpToken, now: int, seen_ids: set[bytes], pk_h: bytes, clock_skew: int = 0) -> int:
    """Check a token and record its id in ``seen_ids``.

    Returns
    -------
    int
        The randomized level i_DP to count.

    Raises
    ------
    BadSignature, NotYetValid, Expired, DuplicateToken
        In that order of precedence.
    """
    if token.issuer_key_id != fingerprint(pk_h) or not verify(pk_h, token.signed_bytes(), token.signature):
        raise BadSignature("token signature invalid")
    if now + clock_skew < token.date_issue:
        raise NotYetValid(f"token valid from {token.date_issue}")
    if now - clock_skew > token.date_end:
        raise Expired(f"token expired at {token.date_end}")
    if token.token_id in seen_ids:
        raise DuplicateToken(f"token {token.token_id[:8].hex()} already counted")
    seen_ids.add(token.token_id)
    return token.i_dp


@dataclass
class RiskHistogram(DataClassJsonMixin):
    """Observed counts of each randomized level in one reporting period."""

    period: str
    counts: list[int]

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def f_tilde(self) -> np.ndarray:
        if self.n == 0:
            raise ParameterError(f"no tokens counted for {self.period}")
        return np.asarray(self.counts, dtype=float) / self.n


def debias(hist: RiskHistogram, params: DpParams, mode: Estimator = Estimator.UNBIASED) -> np.ndarray:
    """Estimate the true level frequencies from observed randomized counts.

    Parameters
    ----------
    hist : RiskHistogram
        Observed counts, ``n`` at least 1.
    params : DpParams
        The mechanism's parameters.
    mode : Estimator, optional
        ``unbiased`` subtracts ``q = 1/(e^ε + k - 1)`` before rescaling, which inverts the mechanism exactly in
        expectation. ``paper_eq1`` subtracts ``1/k`` instead; its expectation is ``f - 1/k`` per component.

    Returns
    -------
    np.ndarray
        ``k`` estimates, not clipped to [0, 1].
    """
    if len(hist.counts) != params.k:
        raise ParameterError(f"histogram has {len(hist.counts)} levels, expected {params.k}")
    f_tilde = hist.f_tilde
    offset = params.q if Estimator(mode) == Estimator.UNBIASED else 1 / params.k
    return (f_tilde - offset) / params.keep_probability


def clip_estimates(f_hat: np.ndarray) -> np.ndarray:
    """Clip estimates into [0, 1]."""
    return np.clip(f_hat, 0.0, 1.0)


@dataclass
class _PeriodTally(DataClassJsonMixin):
    period: str
    counts: list[int]
    seen: list[str] = field(default_factory=list)


class DpAggregator:
    """Per-period histograms and seen token ids, owned by one verifier.

    Submissions from several threads are serialized; reads return copies.

    Parameters
    ----------
    pk_h : bytes
        Issuer public key.
    params : DpParams
        Tokens with other parameters are refused.
    period : str, optional
        ``day`` or ``week``.
    clock_skew : int, optional
        Tolerance on token dates, in seconds.
    """

    def __init__(self, pk_h: bytes, params: DpParams, period: str = "day", clock_skew: int = 0):
        self.pk_h = pk_h
        self.params = params
        self.period = period
        self.clock_skew = clock_skew
        self._counts: dict[str, list[int]] = {}
        self._seen: dict[str, set[bytes]] = {}
        self._lock = threading.Lock()

    def submit(self, token: DpToken, now: int) -> int:
        """Verify ``token`` and count it in the period containing ``now``."""
        if token.k != self.params.k or token.epsilon != self.params.epsilon:
            raise ParameterError("token parameters differ from the aggregator's")
        period = reporting_period(now, self.period)
        with self._lock:
            seen = self._seen.setdefault(period, set())
            level = verify_dp_token(token, now, seen, self.pk_h, self.clock_skew)
            self._counts.setdefault(period, [0] * self.params.k)[level] += 1
        return level

    def periods(self) -> list[str]:
        with self._lock:
            return sorted(self._counts)

    def histogram(self, period: str) -> RiskHistogram:
        with self._lock:
            return RiskHistogram(period, list(self._counts.get(period, [0] * self.params.k)))

    def histograms(self) -> list[RiskHistogram]:
        return [self.histogram(period) for period in self.periods()]

    def save(self, path: Path | str) -> None:
        with self._lock:
            tallies = [
                _PeriodTally(period, counts, sorted(token_id.hex() for token_id in self._seen.get(period, ())))
                for period, counts in sorted(self._counts.items())
            ]
        state = {"params": self.params.to_dict(), "periods": [tally.to_dict() for tally in tallies]}
        Path(path).write_text(json.dumps(state, indent=2))

    @classmethod
    def load(cls, path: Path | str, pk_h: bytes, period: str = "day", clock_skew: int = 0) -> "DpAggregator":
        state = json.loads(Path(path).read_text())
        aggregator = cls(pk_h, DpParams.from_dict(state["params"]), period, clock_skew)
        for item in state["periods"]:
            tally = _PeriodTally.from_dict(item)
            aggregator._counts[tally.period] = list(tally.counts)
            aggregator._seen[tally.period] = {bytes.fromhex(token_id) for token_id in tally.seen}
        return aggregator


def histogram_frame(
    histograms: list[RiskHistogram], params: DpParams, mode: Estimator = Estimator.UNBIASED
) -> DataFrame:
    """Tabulate histograms with columns period, level, count, f_tilde, f_hat."""
    rows = []
    for hist in histograms:
        if hist.n == 0:
            continue
        f_tilde = hist.f_tilde
        f_hat = debias(hist, params, mode)
        for level in range(params.k):
            rows.append(
                {
                    "period": hist.period,
                    "level": level,
                    "count": hist.counts[level],
                    "f_tilde": float(f_tilde[level]),
                    "f_hat": float(f_hat[level]),
                }
            )
    return DataFrame(rows, columns=["period", "level", "count", "f_tilde", "f_hat"])
