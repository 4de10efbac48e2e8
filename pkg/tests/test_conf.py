import os
from importlib import reload
from unittest.mock import mock_open, patch

import pytest

from secureabc.conf import CONFIG, SecureABCConfig, SecureABCSettings
from secureabc.defaults import DEFAULT_DP_EPSILON, DEFAULT_DP_K, DEFAULT_VALIDITY_DAYS
from secureabc.errors import ParameterError


class TestSecureABCSettings:
    def test_settings_initialization(self):
        """Test that SecureABCSettings initializes with default values."""
        settings = SecureABCSettings()

        # Verify default values
        assert settings.validity_days == DEFAULT_VALIDITY_DAYS
        assert settings.rev_v_max_age == 24 * 60 * 60
        assert settings.session_ttl == 300
        assert settings.clock_skew == 0
        assert settings.accept_issuer_signed_verifiers is False
        assert settings.reporting_period == "day"
        assert settings.dp_k == DEFAULT_DP_K
        assert settings.dp_epsilon == DEFAULT_DP_EPSILON
        assert settings.estimator == "unbiased"
        assert settings.ss_prime_id == 1

    def test_settings_custom_values(self):
        """Test that SecureABCSettings can be initialized with custom values."""
        settings = SecureABCSettings(
            validity_days=90,
            clock_skew=300,
            accept_issuer_signed_verifiers=True,
            reporting_period="week",
            estimator="paper_eq1",
        )

        # Verify custom values
        assert settings.validity_days == 90
        assert settings.clock_skew == 300
        assert settings.accept_issuer_signed_verifiers is True
        assert settings.reporting_period == "week"
        assert settings.estimator == "paper_eq1"

    @pytest.mark.parametrize(
        "changes", [{"clock_skew": 301}, {"clock_skew": -1}, {"reporting_period": "month"}, {"estimator": "median"}]
    )
    def test_settings_invalid(self, changes):
        """Test that out-of-range settings are refused."""
        with pytest.raises(ParameterError):
            SecureABCSettings(**changes)


class TestSecureABCConfig:
    def test_config_initialization(self):
        """Test that SecureABCConfig initializes with default settings."""
        config = SecureABCConfig()

        # Verify
        assert isinstance(config.Settings, SecureABCSettings)
        assert config.Settings.validity_days == DEFAULT_VALIDITY_DAYS

    def test_config_to_dict(self):
        """Test that SecureABCConfig can be converted to a dictionary."""
        config_dict = SecureABCConfig().to_dict()

        # Verify
        assert "Settings" in config_dict
        assert config_dict["Settings"]["dp_k"] == DEFAULT_DP_K

    @patch("secureabc.conf.load")
    def test_config_load(self, mock_load):
        """Test that SecureABCConfig can load from a file."""
        # Setup mock
        mock_load.return_value = {"Settings": {"validity_days": 30, "reporting_period": "week"}}

        # Mock open
        with patch("pathlib.Path.open", mock_open()):
            config = SecureABCConfig.load("test_config.toml")

        # Verify
        assert config.Settings.validity_days == 30
        assert config.Settings.reporting_period == "week"
        assert config.Settings.clock_skew == 0
        mock_load.assert_called_once()

    def test_save_and_load(self, tmp_path):
        """Test that a saved configuration reads back unchanged."""
        path = tmp_path / "nested" / "secureabc.toml"
        config = SecureABCConfig(Settings=SecureABCSettings(validity_days=60, clock_skew=30))

        # Test
        config.save(path)

        # Verify
        assert SecureABCConfig.load(path) == config

    def test_load_invalid(self, tmp_path):
        """Test that an invalid value in the file is reported as a parameter error."""
        path = tmp_path / "secureabc.toml"
        path.write_text("[Settings]\nclock_skew = 600\n")

        with pytest.raises(ParameterError):
            SecureABCConfig.load(path)


class TestConfigModule:
    def test_defaults_without_file(self):
        """Test that CONFIG falls back to defaults when the file does not exist."""
        assert CONFIG == SecureABCConfig()

    def test_config_path_environment_variable(self, tmp_path):
        """Test that CONFIG_PATH and CONFIG follow the environment variable."""
        temp_config_path = tmp_path / "config.toml"
        SecureABCConfig(Settings=SecureABCSettings(validity_days=7)).save(temp_config_path)
        original_env = os.environ.get("SECUREABC_CONFIG_PATH")

        try:
            os.environ["SECUREABC_CONFIG_PATH"] = str(temp_config_path)

            # Reload the module to use the environment variable
            import secureabc.conf

            reload(secureabc.conf)

            # Verify
            assert secureabc.conf.CONFIG_PATH == temp_config_path
            assert secureabc.conf.CONFIG.Settings.validity_days == 7
        finally:
            if original_env is not None:
                os.environ["SECUREABC_CONFIG_PATH"] = original_env
            else:
                del os.environ["SECUREABC_CONFIG_PATH"]
            reload(secureabc.conf)
