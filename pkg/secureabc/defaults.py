from math import log
from pathlib import Path

DEFAULT_CONFIG_PATH = Path.home() / ".config" / "secureabc.toml"

# QR code byte-mode capacity at symbol version 40
QR_CAPACITY = 2953
PHOTO_BUDGET = 1800
NAME_LIMIT = 256
CERTIFICATE_VERSION = 1

CID_BYTES = 16
KEY_ID_BYTES = 8
TIMESTAMP_BYTES = 8
SIGNATURE_BYTES = 132
MAX_PLAINTEXT = 64 * 1024

DEFAULT_VALIDITY_DAYS = 180
DEFAULT_REV_V_MAX_AGE = 24 * 60 * 60
DEFAULT_SESSION_TTL = 5 * 60
MAX_CLOCK_SKEW = 300

DEFAULT_DP_K = 2
DEFAULT_DP_EPSILON = log(3)
DEFAULT_SS_PRIME_ID = 1
