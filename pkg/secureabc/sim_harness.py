"""Seeded simulations: estimator error curves and end-to-end protocol scenarios."""

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import log
from typing import Literal

import numpy as np
from dataclasses_json import DataClassJsonMixin
from pandas import DataFrame

from .cert_model import JPEG_MAGIC, DpToken, SsToken, reporting_period
from .crypto_core import KeyRole, keygen_enc, keygen_sign
from .defaults import DEFAULT_DP_EPSILON, DEFAULT_DP_K, DEFAULT_SS_PRIME_ID, DEFAULT_VALIDITY_DAYS
from .dp_tokens import DpAggregator, DpParams, Estimator, RiskHistogram, debias, issue_dp_token, randomize_responses
from .errors import DuplicateIssue, DuplicateToken, Expired, NotYetValid, ParameterError
from .holder_wallet import Wallet
from .issuer import CommChannel, Contact, Issuer, RevocationReason
from .ss_tokens import HelperAggregator, SsParams, VerifierAggregator, aggregate, issue_ss_token
from .trust_root import TrustRoot
from .verifier import Verifier

logger = logging.getLogger(__name__)

DAY = 24 * 60 * 60
ERROR_CURVE_COLUMNS = ["epsilon", "n", "trials", "mean_abs_error"]


@dataclass
class ErrorCurveConfig(DataClassJsonMixin):
    """Parameters of an estimator error sweep.

    Attributes
    ----------
    epsilons : list[float]
        Privacy budgets to sweep.
    k : int
        Number of risk levels.
    n_values : list[int]
        Population sizes, ascending.
    trials : int
        Independent simulations per point.
    true_distribution : list[float] | None
        Frequencies the population is drawn from; uniform when None.
    seed : int
        Non-negative base seed.
    workers : int
        Threads used for trials. Results do not depend on it.
    """

    epsilons: list[float] = field(default_factory=lambda: [log(5 / 3), log(3), log(7)])
    k: int = DEFAULT_DP_K
    n_values: list[int] = field(default_factory=lambda: [100, 1_000, 10_000])
    trials: int = 200
    true_distribution: list[float] | None = None
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ParameterError("trials must be at least 1")
        if not self.n_values or any(n < 1 for n in self.n_values):
            raise ParameterError("n_values must be positive")
        if any(a >= b for a, b in zip(self.n_values, self.n_values[1:])):
            raise ParameterError("n_values must be strictly ascending")
        if self.seed < 0:
            raise ParameterError("seed must not be negative")
        distribution = self.distribution()
        if len(distribution) != self.k or (distribution < 0).any() or not np.isclose(distribution.sum(), 1.0):
            raise ParameterError(f"true_distribution must be {self.k} non-negative frequencies summing to 1")

    def distribution(self) -> np.ndarray:
        if self.true_distribution is None:
            return np.full(self.k, 1 / self.k)
        return np.asarray(self.true_distribution, dtype=float)


def _trial_error(config: ErrorCurveConfig, eps_index: int, n_index: int, trial: int) -> float:
    rng = np.random.default_rng([config.seed ^ trial, eps_index, n_index])
    params = DpParams(config.k, config.epsilons[eps_index])
    truth = config.distribution()
    values = rng.choice(config.k, size=config.n_values[n_index], p=truth)
    counts = np.bincount(randomize_responses(values, params, rng), minlength=config.k)
    f_hat = debias(RiskHistogram("trial", counts.tolist()), params, Estimator.UNBIASED)
    return float(np.mean(np.abs(f_hat - truth)))


def run_error_curve(config: ErrorCurveConfig) -> DataFrame:
    """Mean absolute estimation error for every (epsilon, n) pair.

    Each trial draws ``n`` true levels from the configured distribution, randomizes them, debiases the observed
    counts with the unbiased estimator, and averages ``|f_hat - f|`` over the ``k`` levels. Trials are seeded from
    ``seed ^ trial`` plus the point's indices, so results are identical for any number of workers.

    Returns
    -------
    DataFrame
        Columns epsilon, n, trials, mean_abs_error.
    """
    rows = []
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        for eps_index, epsilon in enumerate(config.epsilons):
            for n_index, n in enumerate(config.n_values):
                errors = list(
                    pool.map(lambda trial: _trial_error(config, eps_index, n_index, trial), range(config.trials))
                )
                rows.append((epsilon, n, config.trials, float(np.mean(errors))))
                logger.debug("epsilon=%.4f n=%d error=%.5f", epsilon, n, rows[-1][-1])
    return DataFrame(rows, columns=ERROR_CURVE_COLUMNS)


def fit_loglog_slope(frame: DataFrame) -> dict[float, float]:
    """Slope of log(mean_abs_error) against log(n), per epsilon."""
    slopes = {}
    for epsilon, group in frame.groupby("epsilon"):
        slope, _ = np.polyfit(np.log(group["n"]), np.log(group["mean_abs_error"]), 1)
        slopes[float(epsilon)] = float(slope)
    return slopes


@dataclass
class ScenarioConfig(DataClassJsonMixin):
    """Parameters of an end-to-end protocol run.

    Attributes
    ----------
    population : int
        People who may be tested.
    issue_rate, auth_rate, revoke_rate : float
        Mean events per simulated day (Poisson).
    days : int
        Simulated days.
    seed : int
        Base seed.
    refresh_policy : str
        ``immediate`` publishes and refreshes rev after every revocation, ``daily`` once at the end of each day.
    app_share : float
        Fraction of authentications done through the app; the rest are paper-based.
    """

    population: int = 200
    issue_rate: float = 20.0
    auth_rate: float = 50.0
    revoke_rate: float = 2.0
    days: int = 7
    seed: int = 0
    refresh_policy: Literal["immediate", "daily"] = "daily"
    app_share: float = 0.5
    validity_days: int = DEFAULT_VALIDITY_DAYS
    start: int = 1_600_000_000
    dp_k: int = DEFAULT_DP_K
    dp_epsilon: float = DEFAULT_DP_EPSILON
    ss_prime_id: int = DEFAULT_SS_PRIME_ID
    photo_bytes: int = 600

    def __post_init__(self):
        if min(self.issue_rate, self.auth_rate, self.revoke_rate) < 0:
            raise ParameterError("event rates must not be negative")
        if self.population < 1 or self.days < 1:
            raise ParameterError("population and days must be positive")
        if self.refresh_policy not in ("immediate", "daily"):
            raise ParameterError(f"unknown refresh policy {self.refresh_policy!r}")
        if not 0 <= self.app_share <= 1:
            raise ParameterError("app_share must lie in [0, 1]")


@dataclass
class ScenarioReport(DataClassJsonMixin):
    """Outcome counts of a scenario run.

    ``wrongly_accepted`` counts accepted certificates the issuer had already revoked, i.e. revocation-propagation
    lag. ``token_rejects`` counts tokens refused outside their validity window, by reason.
    """

    issued: int = 0
    duplicate_issues: int = 0
    revocations: int = 0
    authentications: int = 0
    accepts: int = 0
    rejects: dict[str, int] = field(default_factory=dict)
    wrongly_accepted: int = 0
    token_duplicates: int = 0
    token_rejects: dict[str, int] = field(default_factory=dict)
    dp_tokens: int = 0
    dp_estimate: list[float] = field(default_factory=list)
    dp_truth: list[float] = field(default_factory=list)
    ss_tokens: int = 0
    ss_total: int = 0
    ss_truth: int = 0


@dataclass
class _Holder:
    wallet: Wallet
    risk: int
    dp_token: DpToken
    ss_token: SsToken


class _Scenario:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.report = ScenarioReport()
        self.dp_params = DpParams(config.dp_k, config.dp_epsilon)
        self.ss_params = SsParams(prime_id=config.ss_prime_id, k=config.dp_k, n_max=10**6)

        start = config.start
        self.root = TrustRoot.generate(self.rng)
        self.issuer = Issuer(keygen_sign(self.rng), validity_days=config.validity_days)
        issuer_endorsement = self.root.endorse(self.issuer.public_key, KeyRole.ISSUER, start)
        verifier_keys = keygen_enc(self.rng)
        self.helper_keys = keygen_enc(self.rng)
        self.verifier = Verifier(
            self.root.public_key, verifier_keys, self.root.endorse(verifier_keys.public_key, KeyRole.VERIFIER, start)
        )
        self.verifier.add_issuer(issuer_endorsement)
        self.verifier.refresh_revocations(self.issuer.publish_revocation_list(start))
        self.rev_v = self.root.publish_verifier_revocation_list(start)

        self.dp = DpAggregator(self.issuer.public_key, self.dp_params)
        self.ss_verifier = VerifierAggregator(self.issuer.public_key, self.ss_params)
        self.ss_helper = HelperAggregator(self.issuer.public_key, self.helper_keys.private_key, self.ss_params)
        self.holders: dict[int, _Holder] = {}
        self.current_cid: dict[int, bytes] = {}
        self.revoked: set[bytes] = set()
        self.dp_truth = np.zeros(config.dp_k, dtype=int)
        self.ss_truth = 0
        self.tests = 0

    def _photo(self) -> bytes:
        return JPEG_MAGIC + self.rng.bytes(self.config.photo_bytes - 4) + b"\xff\xd9"

    def _refresh(self, now: int) -> None:
        self.verifier.refresh_revocations(self.issuer.publish_revocation_list(now))

    def issue(self, now: int) -> None:
        person = int(self.rng.integers(self.config.population))
        self.tests += 1
        try:
            certificate = self.issuer.issue_certificate(
                person_id=f"P{person:06d}",
                tid=f"T{self.tests:08d}",
                name=f"Holder {person}",
                photo=self._photo(),
                contact=Contact(CommChannel.SMS, f"+4400{person:06d}"),
                now=now,
                rng=self.rng,
            )
        except DuplicateIssue:
            self.report.duplicate_issues += 1
            return
        self.report.issued += 1
        risk = self.holders[person].risk if person in self.holders else int(self.rng.integers(self.config.dp_k))
        date_end = certificate.body.valid_until
        dp_token, _ = issue_dp_token(self.issuer.keys.private_key, risk, self.dp_params, now, date_end, self.rng)
        ss_token, _ = issue_ss_token(
            self.issuer.keys.private_key, self.helper_keys.public_key, risk, self.ss_params, now, date_end, self.rng
        )
        wallet = Wallet(certificate, self.root.public_key, self.rev_v, now)
        self.holders[person] = _Holder(wallet, risk, dp_token, ss_token)
        self.current_cid[person] = certificate.body.cid

    def revoke(self, now: int) -> None:
        active = sorted(person for person, cid in self.current_cid.items() if cid not in self.revoked)
        if not active:
            return
        cid = self.current_cid[active[int(self.rng.integers(len(active)))]]
        reason = RevocationReason(int(self.rng.integers(1, len(RevocationReason) + 1)))
        self.issuer.revoke_by_cid(cid, reason, now)
        self.revoked.add(cid)
        self.report.revocations += 1
        if self.config.refresh_policy == "immediate":
            self._refresh(now)

    def authenticate(self, now: int, day_start: int) -> None:
        if not self.holders:
            return
        people = sorted(self.holders)
        holder = self.holders[people[int(self.rng.integers(len(people)))]]
        self.report.authentications += 1
        if self.rng.random() < self.config.app_share:
            if holder.wallet.fetched_at < day_start:
                holder.wallet.refresh_verifier_revocations(self.rev_v, now)
            ciphertext = holder.wallet.respond(self.verifier.credential, now, self.rng)
            result = self.verifier.verify_app(ciphertext, now)
        else:
            result = self.verifier.verify_paper(holder.wallet.export_qr(), now)
        if result.accepted:
            self.report.accepts += 1
            if result.cid in self.revoked:
                self.report.wrongly_accepted += 1
        else:
            reason = result.reason.value
            self.report.rejects[reason] = self.report.rejects.get(reason, 0) + 1
        self.present_tokens(holder, now)

    def _token_reject(self, exc: Expired | NotYetValid) -> None:
        reason = exc.reason.value
        self.report.token_rejects[reason] = self.report.token_rejects.get(reason, 0) + 1

    def present_tokens(self, holder: _Holder, now: int) -> None:
        try:
            self.dp.submit(holder.dp_token, now)
            self.dp_truth[holder.risk] += 1
            self.report.dp_tokens += 1
        except DuplicateToken:
            self.report.token_duplicates += 1
        except (Expired, NotYetValid) as exc:
            self._token_reject(exc)
        try:
            self.ss_helper.ingest(self.ss_verifier.ingest(holder.ss_token, now))
            self.ss_truth += holder.risk
            self.report.ss_tokens += 1
        except DuplicateToken:
            self.report.token_duplicates += 1
        except (Expired, NotYetValid) as exc:
            self._token_reject(exc)

    def run(self) -> ScenarioReport:
        config = self.config
        for day in range(config.days):
            day_start = config.start + day * DAY
            if day:
                self.rev_v = self.root.publish_verifier_revocation_list(day_start)
            events = (
                ["issue"] * int(self.rng.poisson(config.issue_rate))
                + ["revoke"] * int(self.rng.poisson(config.revoke_rate))
                + ["auth"] * int(self.rng.poisson(config.auth_rate))
            )
            self.rng.shuffle(events)
            spacing = (DAY - 2) // (len(events) + 1)
            for index, event in enumerate(events, start=1):
                now = day_start + index * spacing
                if event == "issue":
                    self.issue(now)
                elif event == "revoke":
                    self.revoke(now)
                else:
                    self.authenticate(now, day_start)
            if config.refresh_policy == "daily":
                self._refresh(day_start + DAY - 1)
            logger.info("simulated %s", reporting_period(day_start))
        return self.summarize()

    def summarize(self) -> ScenarioReport:
        report = self.report
        counts = Counter()
        for hist in self.dp.histograms():
            counts.update(dict(enumerate(hist.counts)))
        if report.dp_tokens:
            combined = RiskHistogram("all", [counts[level] for level in range(self.config.dp_k)])
            report.dp_estimate = [float(x) for x in debias(combined, self.dp_params)]
            report.dp_truth = [float(x) for x in self.dp_truth / self.dp_truth.sum()]
        report.ss_total = sum(
            aggregate(self.ss_verifier.accumulator(period), self.ss_helper.accumulator(period))
            for period in self.ss_verifier.periods()
        )
        report.ss_truth = self.ss_truth
        report.rejects = dict(sorted(report.rejects.items()))
        report.token_rejects = dict(sorted(report.token_rejects.items()))
        return report


def run_scenario(config: ScenarioConfig) -> ScenarioReport:
    """Drive root, issuer, holders and one verifier (with a helper) through seeded daily event streams.

    Every day a Poisson number of issue, revoke and authentication events is shuffled and spread over the day.
    Authenticating holders also present their randomized and secret-shared tokens. Identical configs give
    identical reports.
    """
    return _Scenario(config).run()


def tradeoff_table(report: ScenarioReport | None = None) -> DataFrame:
    """Compare certificates with the two token protocols.

    When a scenario report is given, a measured error column is added: the fraction of wrongly accepted
    certificates, the largest deviation of the randomized estimate from the truth, and the absolute difference
    between the secret-shared total and the true sum.
    """
    table = DataFrame(
        {
            "protocol": ["antibody certificate", "randomized token", "secret-shared token"],
            "mitigates_discrimination": [False, True, True],
            "ideal_accuracy": [True, False, True],
            "binding_necessary": [True, False, False],
            "trusted_entities": ["1+", "1+", "2+"],
        }
    )
    if report is not None:
        dp_error = (
            float(np.max(np.abs(np.subtract(report.dp_estimate, report.dp_truth)))) if report.dp_estimate else 0.0
        )
        table["measured_error"] = [
            report.wrongly_accepted / max(report.accepts, 1),
            dp_error,
            float(abs(report.ss_total - report.ss_truth)),
        ]
    return table
