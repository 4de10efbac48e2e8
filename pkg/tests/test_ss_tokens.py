from dataclasses import replace

import numpy as np
import pytest
from conftest import DAY, NOW
from scipy import stats

from secureabc.errors import (
    BadSignature,
    DecryptionFailure,
    DuplicateToken,
    Expired,
    NotYetValid,
    ParameterError,
    PeriodMismatch,
)
from secureabc.ss_tokens import (
    PRIMES,
    Accumulator,
    ForwardChannel,
    HelperAggregator,
    Party,
    SsParams,
    VerifierAggregator,
    aggregate,
    helper_ingest,
    issue_ss_token,
    split_shares,
    verifier_ingest,
)

SMALL = SsParams(prime_id=3, k=2, n_max=15)


@pytest.fixture
def params():
    """The default 61-bit prime with four risk levels."""
    return SsParams(prime_id=1, k=4)


def _token(pki, level, params, rng, date_end=NOW + DAY):
    token, _ = issue_ss_token(
        pki.issuer_keys.private_key, pki.helper_keys.public_key, level, params, NOW, date_end, rng
    )
    return token


class TestSsParams:
    def test_primes(self):
        """Test the moduli behind each prime id."""
        assert PRIMES == {1: 2**61 - 1, 2: 2**31 - 1, 3: 31}
        assert SMALL.p == 31

    @pytest.mark.parametrize(
        "changes",
        [{"prime_id": 4}, {"k": 0}, {"prime_id": 3, "k": 2, "n_max": 16}, {"prime_id": 2, "k": 256, "n_max": 10**9}],
    )
    def test_invalid(self, changes):
        """Test unknown primes and populations whose sums could wrap around."""
        with pytest.raises(ParameterError):
            SsParams(**changes)


class TestSplitShares:
    def test_shares_sum_to_level(self, rng):
        """Test that the two shares add up to the level modulo p."""
        for level in range(SMALL.k):
            share_v, share_w = split_shares(level, SMALL, rng)

            assert 0 <= share_v < 31 and 0 <= share_w < 31
            assert (share_v + share_w) % 31 == level

    def test_invalid_level(self, rng):
        """Test that levels outside 0..k-1 are refused."""
        with pytest.raises(ParameterError):
            split_shares(2, SMALL, rng)

    @pytest.mark.parametrize("level", [0, 1])
    def test_each_share_is_uniform(self, level):
        """Test that either share alone is uniform over 0..p-1 whatever the level."""
        rng = np.random.default_rng(100 + level)
        draws = np.array([split_shares(level, SMALL, rng) for _ in range(31 * 200)])

        for column in (0, 1):
            counts = np.bincount(draws[:, column], minlength=31)
            assert stats.chisquare(counts).pvalue > 1e-4


class TestVerifierAggregator:
    def test_ingest_forwards_helper_share(self, pki, params, rng):
        """Test that the verifier absorbs its share and forwards the helper's untouched."""
        token = _token(pki, 3, params, rng)
        aggregator = VerifierAggregator(pki.issuer_keys.public_key, params)

        # Test
        message = aggregator.ingest(token, NOW + 60)

        # Verify
        assert message.share_w_ciphertext == token.share_w_ciphertext
        assert message.share_w_signature == token.share_w_signature
        assert message.period_name == "2020-09-13"
        accumulator = aggregator.accumulator("2020-09-13")
        assert accumulator.owner == Party.VERIFIER
        assert (accumulator.value, accumulator.count) == (token.share_v, 1)

    def test_duplicate(self, pki, params, rng):
        """Test that replaying a token within a period absorbs nothing."""
        token = _token(pki, 1, params, rng)
        aggregator = VerifierAggregator(pki.issuer_keys.public_key, params)
        aggregator.ingest(token, NOW)

        with pytest.raises(DuplicateToken):
            aggregator.ingest(token, NOW + 10)
        assert aggregator.accumulator("2020-09-13").count == 1

    @pytest.mark.parametrize("moment, error", [(NOW - 1, NotYetValid), (NOW + DAY + 1, Expired)])
    def test_dates(self, pki, params, rng, moment, error):
        """Test that tokens are only absorbed inside their validity window."""
        aggregator = VerifierAggregator(pki.issuer_keys.public_key, params)

        with pytest.raises(error):
            aggregator.ingest(_token(pki, 1, params, rng), moment)

    def test_bad_signature(self, pki, params, rng):
        """Test that a modified clear share breaks the outer signature."""
        token = _token(pki, 1, params, rng)
        forged = replace(token, share_v=(token.share_v + 1) % params.p)

        with pytest.raises(BadSignature):
            VerifierAggregator(pki.issuer_keys.public_key, params).ingest(forged, NOW)

    def test_prime_mismatch(self, pki, params, rng):
        """Test that tokens over another prime are refused."""
        token = _token(pki, 1, SMALL, rng)

        with pytest.raises(ParameterError):
            VerifierAggregator(pki.issuer_keys.public_key, params).ingest(token, NOW)

    def test_save_and_load(self, pki, params, rng, tmp_path):
        """Test that accumulators and seen ids survive a restart."""
        token = _token(pki, 2, params, rng)
        aggregator = VerifierAggregator(pki.issuer_keys.public_key, params)
        aggregator.ingest(token, NOW)
        path = tmp_path / "ss-state.json"

        # Test
        aggregator.save(path)
        loaded = VerifierAggregator.load(path, pki.issuer_keys.public_key, params)

        # Verify
        assert loaded.accumulator("2020-09-13") == aggregator.accumulator("2020-09-13")
        with pytest.raises(DuplicateToken):
            loaded.ingest(token, NOW)
        with pytest.raises(ParameterError):
            VerifierAggregator.load(path, pki.issuer_keys.public_key, SMALL)


class TestHelperAggregator:
    def test_wrong_helper_key(self, pki, params, rng):
        """Test that a share encrypted to another helper cannot be absorbed."""
        message = VerifierAggregator(pki.issuer_keys.public_key, params).ingest(_token(pki, 1, params, rng), NOW)
        helper = HelperAggregator(pki.issuer_keys.public_key, pki.verifier_keys.private_key, params)

        with pytest.raises(DecryptionFailure):
            helper.ingest(message)

    def test_inner_signature(self, pki, params, rng):
        """Test that the helper only absorbs ciphertexts the issuer signed."""
        message = VerifierAggregator(pki.issuer_keys.public_key, params).ingest(_token(pki, 1, params, rng), NOW)
        other = _token(pki, 1, params, rng)
        forged = replace(message, share_w_ciphertext=other.share_w_ciphertext)
        helper = HelperAggregator(pki.issuer_keys.public_key, pki.helper_keys.private_key, params)

        with pytest.raises(BadSignature):
            helper.ingest(forged)

    def test_duplicate(self, pki, params, rng):
        """Test that a relayed share is absorbed once per period."""
        message = VerifierAggregator(pki.issuer_keys.public_key, params).ingest(_token(pki, 1, params, rng), NOW)
        helper = HelperAggregator(pki.issuer_keys.public_key, pki.helper_keys.private_key, params)
        assert helper.ingest(message) == 1

        with pytest.raises(DuplicateToken):
            helper.ingest(message)

    def test_helper_ingest_checks_key(self, pki, params):
        """Test that the module-level entry point refuses a key other than the aggregator's."""
        helper = HelperAggregator(pki.issuer_keys.public_key, pki.helper_keys.private_key, params)

        with pytest.raises(ParameterError):
            helper_ingest(None, pki.verifier_keys.private_key, helper)


class TestAggregate:
    @pytest.mark.parametrize("params", [SMALL, SsParams(prime_id=2, k=4, n_max=1000), SsParams(prime_id=1, k=4)])
    def test_total_risk(self, pki, params):
        """Test that combining both accumulators reveals exactly the sum of the levels."""
        rng = np.random.default_rng(5)
        levels = rng.integers(0, params.k, size=12).tolist()
        verifier = VerifierAggregator(pki.issuer_keys.public_key, params)
        helper = HelperAggregator(pki.issuer_keys.public_key, pki.helper_keys.private_key, params)

        # Test
        for level in levels:
            message = verifier_ingest(_token(pki, level, params, rng), NOW, verifier)
            helper_ingest(message, pki.helper_keys.private_key, helper)
        total = aggregate(verifier.accumulator("2020-09-13"), helper.accumulator("2020-09-13"))

        # Verify
        assert total == sum(levels)
        assert helper.accumulator("2020-09-13").count == len(levels)

    @pytest.mark.slow
    def test_thousand_users(self, pki, params):
        """Test exactness for 1000 seeded users, with per-share uniformity on the helper's side."""
        rng = np.random.default_rng(2021)
        levels = rng.integers(0, params.k, size=1_000)
        verifier = VerifierAggregator(pki.issuer_keys.public_key, params)
        helper = HelperAggregator(pki.issuer_keys.public_key, pki.helper_keys.private_key, params)
        clear_shares = []

        # Test
        for level in levels.tolist():
            token = _token(pki, level, params, rng)
            clear_shares.append(token.share_v)
            helper_ingest(verifier_ingest(token, NOW, verifier), pki.helper_keys.private_key, helper)

        # Verify
        assert aggregate(verifier.accumulator("2020-09-13"), helper.accumulator("2020-09-13")) == int(levels.sum())
        assert verifier.accumulator("2020-09-13").count == helper.accumulator("2020-09-13").count == 1_000
        top_bits = np.bincount([share >> 57 for share in clear_shares], minlength=16)
        assert stats.chisquare(top_bits).pvalue > 1e-4

    def test_period_mismatch(self):
        """Test that accumulators of different periods cannot be combined."""
        j_v = Accumulator(Party.VERIFIER, "2020-09-13", 1, 5, 1)
        j_w = Accumulator(Party.HELPER, "2020-09-14", 1, 5, 1)

        with pytest.raises(PeriodMismatch):
            aggregate(j_v, j_w)

    def test_prime_mismatch(self):
        """Test that accumulators over different primes cannot be combined."""
        with pytest.raises(PeriodMismatch):
            aggregate(Accumulator(Party.VERIFIER, "p", 1), Accumulator(Party.HELPER, "p", 2))

    def test_empty_period(self, pki, params):
        """Test that a period with no shares aggregates to zero."""
        verifier = VerifierAggregator(pki.issuer_keys.public_key, params)
        helper = HelperAggregator(pki.issuer_keys.public_key, pki.helper_keys.private_key, params)

        assert aggregate(verifier.accumulator("2020-09-13"), helper.accumulator("2020-09-13")) == 0


class TestForwardChannel:
    def test_send_and_receive(self, pki, params, rng, tmp_path):
        """Test that relayed messages are read back per period in order."""
        verifier = VerifierAggregator(pki.issuer_keys.public_key, params)
        first = verifier.ingest(_token(pki, 1, params, rng, date_end=NOW + 2 * DAY), NOW)
        second = verifier.ingest(_token(pki, 2, params, rng, date_end=NOW + 2 * DAY), NOW + DAY)
        channel = ForwardChannel(tmp_path / "forward")

        # Test
        channel.send(first)
        channel.send(second)

        # Verify
        assert channel.periods() == ["2020-09-13", "2020-09-14"]
        assert channel.receive("2020-09-13") == [first]
        assert channel.receive("2020-09-15") == []
