"""Secret-shared health tokens.

The issuer splits a risk level into two additive shares modulo a prime. The verifier receives its share in clear;
the helper's share is encrypted to the helper and signed by the issuer, so the verifier can only relay it. Each
party sums the shares it sees per reporting period, and only the sum of both accumulators reveals anything: the
period's total risk.
"""

import base64
import fcntl
import json
import logging
import threading
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
from dataclasses_json import DataClassJsonMixin

from .cert_model import ForwardMessage, SsToken, reporting_period
from .crypto_core import decrypt, encrypt, fingerprint, public_key_from_private, sign, verify
from .defaults import DEFAULT_SS_PRIME_ID
from .errors import (
    BadSignature,
    DuplicateToken,
    Expired,
    MalformedPayload,
    NotYetValid,
    ParameterError,
    PeriodMismatch,
)

logger = logging.getLogger(__name__)

# prime id byte -> modulus
PRIMES = {1: 2**61 - 1, 2: 2**31 - 1, 3: 31}
SHARE_BYTES = 8


class Party(str, Enum):
    VERIFIER = "verifier"
    HELPER = "helper"


@dataclass(frozen=True)
class SsParams(DataClassJsonMixin):
    """Secret-sharing parameters.

    Attributes
    ----------
    prime_id : int
        Key into :data:`PRIMES`.
    k : int
        Number of risk levels; values lie in ``0..k-1``.
    n_max : int
        Largest population one accumulator may absorb. ``k * n_max < p`` keeps sums exact.
    """

    prime_id: int = DEFAULT_SS_PRIME_ID
    k: int = 256
    n_max: int = 10**9

    def __post_init__(self):
        if self.prime_id not in PRIMES:
            raise ParameterError(f"unknown prime id {self.prime_id}")
        if self.k < 1:
            raise ParameterError("k must be positive")
        if not self.k * self.n_max < self.p:
            raise ParameterError(f"k * n_max = {self.k * self.n_max} must be below p = {self.p}")

    @property
    def p(self) -> int:
        return PRIMES[self.prime_id]


def split_shares(i_true: int, params: SsParams, rng: np.random.Generator) -> tuple[int, int]:
    """Split ``i_true`` into ``(share_V, share_W)`` with ``share_V`` uniform and the sum ``i_true`` mod p.

    Raises
    ------
    ParameterError
        If ``i_true`` is outside ``0..k-1``.
    """
    if not 0 <= i_true < params.k:
        raise ParameterError(f"risk level {i_true} outside 0..{params.k - 1}")
    share_v = int(rng.integers(0, params.p))
    return share_v, (i_true - share_v) % params.p


def issue_ss_token(
    sk_h: bytes,
    pk_w: bytes,
    i_true: int,
    params: SsParams,
    date_issue: int,
    date_end: int,
    rng: np.random.Generator | None = None,
) -> tuple[SsToken, int]:
    """Issue token_SS.

    The helper share is encrypted to ``pk_w`` and the ciphertext signed; the outer signature covers the clear
    share, the ciphertext, its signature, the prime id and the dates.

    Returns
    -------
    tuple[SsToken, int]
        The token and, for the holder, the true level.
    """
    share_v, share_w = split_shares(i_true, params, rng if rng is not None else np.random.default_rng())
    ciphertext = encrypt(pk_w, share_w.to_bytes(SHARE_BYTES, "big"), rng)
    unsigned = SsToken(
        date_issue=date_issue,
        date_end=date_end,
        issuer_key_id=fingerprint(public_key_from_private(sk_h)),
        share_v=share_v,
        share_w_ciphertext=ciphertext,
        share_w_signature=sign(sk_h, ciphertext),
        prime_id=params.prime_id,
    )
    token = replace(unsigned, signature=sign(sk_h, unsigned.signed_bytes(), deterministic=False))
    logger.info("issued secret-shared token %s", token.token_id[:8].hex())
    return token, i_true


@dataclass
class Accumulator(DataClassJsonMixin):
    """j_V or j_W for one period."""

    owner: Party
    period: str
    prime_id: int
    value: int = 0
    count: int = 0

    def absorb(self, share: int) -> None:
        self.value = (self.value + share) % PRIMES[self.prime_id]
        self.count += 1


@dataclass
class _AccumulatorState(DataClassJsonMixin):
    accumulator: Accumulator
    seen: list[str]


class _Aggregator:
    owner: Party

    def __init__(self, pk_h: bytes, params: SsParams):
        self.pk_h = pk_h
        self.params = params
        self._accumulators: dict[str, Accumulator] = {}
        self._seen: dict[str, set[bytes]] = {}
        self._lock = threading.Lock()

    def _absorb(self, period: str, token_id: bytes, share: int) -> None:
        seen = self._seen.setdefault(period, set())
        if token_id in seen:
            raise DuplicateToken(f"token {token_id[:8].hex()} already counted for {period}")
        accumulator = self._accumulators.setdefault(period, Accumulator(self.owner, period, self.params.prime_id))
        seen.add(token_id)
        accumulator.absorb(share)

    def accumulator(self, period: str) -> Accumulator:
        """A copy of the period's accumulator; an empty one if nothing was absorbed."""
        with self._lock:
            current = self._accumulators.get(period)
            if current is None:
                return Accumulator(self.owner, period, self.params.prime_id)
            return replace(current)

    def periods(self) -> list[str]:
        with self._lock:
            return sorted(self._accumulators)

    def save(self, path: Path | str) -> None:
        with self._lock:
            state = [
                _AccumulatorState(accumulator, sorted(token_id.hex() for token_id in self._seen[period])).to_dict()
                for period, accumulator in sorted(self._accumulators.items())
            ]
        Path(path).write_text(json.dumps({"params": self.params.to_dict(), "periods": state}, indent=2))

    def _restore(self, path: Path | str) -> None:
        state = json.loads(Path(path).read_text())
        if SsParams.from_dict(state["params"]) != self.params:
            raise ParameterError(f"{path} was written with different parameters")
        for item in state["periods"]:
            restored = _AccumulatorState.from_dict(item)
            self._accumulators[restored.accumulator.period] = restored.accumulator
            self._seen[restored.accumulator.period] = {bytes.fromhex(token_id) for token_id in restored.seen}


class VerifierAggregator(_Aggregator):
    """The verifier's accumulators j_V, one per reporting period.

    Parameters
    ----------
    pk_h : bytes
        Issuer public key.
    params : SsParams
        Tokens must use the same prime.
    period : str, optional
        ``day`` or ``week``.
    clock_skew : int, optional
        Tolerance on token dates, in seconds.
    """

    owner = Party.VERIFIER

    def __init__(self, pk_h: bytes, params: SsParams, period: str = "day", clock_skew: int = 0):
        super().__init__(pk_h, params)
        self.period = period
        self.clock_skew = clock_skew

    def ingest(self, token: SsToken, now: int) -> ForwardMessage:
        """Check the outer signature, dates and freshness, absorb share_V, and return share_W for the helper.

        Raises
        ------
        BadSignature, NotYetValid, Expired, DuplicateToken
            In that order of precedence; nothing is absorbed or forwarded.
        """
        if token.issuer_key_id != fingerprint(self.pk_h) or not verify(
            self.pk_h, token.signed_bytes(), token.signature
        ):
            raise BadSignature("token signature invalid")
        if token.prime_id != self.params.prime_id:
            raise ParameterError(f"token uses prime id {token.prime_id}, expected {self.params.prime_id}")
        if now + self.clock_skew < token.date_issue:
            raise NotYetValid(f"token valid from {token.date_issue}")
        if now - self.clock_skew > token.date_end:
            raise Expired(f"token expired at {token.date_end}")
        period = reporting_period(now, self.period)
        with self._lock:
            self._absorb(period, token.token_id, token.share_v)
        logger.info("absorbed share for %s from token %s", period, token.token_id[:8].hex())
        return ForwardMessage(
            issuer_key_id=token.issuer_key_id,
            share_w_ciphertext=token.share_w_ciphertext,
            share_w_signature=token.share_w_signature,
            prime_id=token.prime_id,
            period=period.encode("ascii"),
        )

    @classmethod
    def load(cls, path: Path | str, pk_h: bytes, params: SsParams, **options) -> "VerifierAggregator":
        aggregator = cls(pk_h, params, **options)
        aggregator._restore(path)
        return aggregator


class HelperAggregator(_Aggregator):
    """The helper's accumulators j_W.

    Parameters
    ----------
    pk_h : bytes
        Issuer public key, checked against the inner signature.
    sk_w : bytes
        Helper decryption key.
    params : SsParams
        Messages must use the same prime.
    """

    owner = Party.HELPER

    def __init__(self, pk_h: bytes, sk_w: bytes, params: SsParams):
        super().__init__(pk_h, params)
        self.sk_w = sk_w

    def ingest(self, message: ForwardMessage) -> int:
        """Verify the inner signature, decrypt share_W and absorb it into the message's period.

        Returns
        -------
        int
            The number of shares absorbed for that period so far.

        Raises
        ------
        BadSignature
            If the issuer did not sign the ciphertext.
        DecryptionFailure
            If the share was encrypted to another helper.
        DuplicateToken
            If the same share was already relayed for the period.
        """
        if message.issuer_key_id != fingerprint(self.pk_h) or not verify(
            self.pk_h, message.share_w_ciphertext, message.share_w_signature
        ):
            raise BadSignature("share not signed by the issuer")
        if message.prime_id != self.params.prime_id:
            raise ParameterError(f"message uses prime id {message.prime_id}, expected {self.params.prime_id}")
        plaintext = decrypt(self.sk_w, message.share_w_ciphertext)
        if len(plaintext) != SHARE_BYTES:
            raise MalformedPayload(f"share is {len(plaintext)} bytes, expected {SHARE_BYTES}", 0)
        share = int.from_bytes(plaintext, "big")
        if share >= self.params.p:
            raise MalformedPayload("share not reduced modulo p", 0)
        with self._lock:
            self._absorb(message.period_name, message.share_w_signature, share)
            count = self._accumulators[message.period_name].count
        logger.info("absorbed relayed share for %s", message.period_name)
        return count

    @classmethod
    def load(cls, path: Path | str, pk_h: bytes, sk_w: bytes, params: SsParams) -> "HelperAggregator":
        aggregator = cls(pk_h, sk_w, params)
        aggregator._restore(path)
        return aggregator


def verifier_ingest(token: SsToken, now: int, state: VerifierAggregator) -> ForwardMessage:
    return state.ingest(token, now)


def helper_ingest(message: ForwardMessage, sk_w: bytes, state: HelperAggregator) -> int:
    if sk_w != state.sk_w:
        raise ParameterError("helper key does not match the aggregator's")
    return state.ingest(message)


def aggregate(j_v: Accumulator, j_w: Accumulator) -> int:
    """Combine the two accumulators of one period: ``(j_V + j_W) mod p``.

    Raises
    ------
    PeriodMismatch
        If the accumulators belong to different periods or primes.
    """
    if j_v.period != j_w.period:
        raise PeriodMismatch(f"{j_v.period} != {j_w.period}")
    if j_v.prime_id != j_w.prime_id:
        raise PeriodMismatch(f"prime id {j_v.prime_id} != {j_w.prime_id}")
    return (j_v.value + j_w.value) % PRIMES[j_v.prime_id]


class ForwardChannel:
    """Append-only relay from verifier to helper: one file of base64 TLV lines per period.

    Parameters
    ----------
    directory : Path | str
        Where the ``<period>.fwd`` files live.
    """

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)

    def _path(self, period: str) -> Path:
        return self.directory / f"{period}.fwd"

    def send(self, message: ForwardMessage) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        with self._path(message.period_name).open("a") as f:
            fcntl.flock(f, fcntl.LOCK_EX)
            try:
                f.write(base64.b64encode(message.to_tlv()).decode("ascii") + "\n")
            finally:
                fcntl.flock(f, fcntl.LOCK_UN)

    def receive(self, period: str) -> list[ForwardMessage]:
        path = self._path(period)
        if not path.exists():
            return []
        return [ForwardMessage.from_tlv(base64.b64decode(line)) for line in path.read_text().splitlines() if line]

    def periods(self) -> list[str]:
        return sorted(path.stem for path in self.directory.glob("*.fwd"))
