"""Constants shared across the package."""
import math

# run-record schema version written to, and required from, run stores
SCHEMA_VERSION = 1

# number of public actions in the negotiation grammar
N_ACTIONS = 5

# upper bound of run-level action entropy [bits]
MAX_ACTION_ENTROPY = math.log2(N_ACTIONS)

# scenario defaults
DEFAULT_TURN_CAP = 12  # full rounds
DEFAULT_AUTHORITY_MIN_TURNS = 5
DEFAULT_MIN_TURN_UNIT = "rounds"
MIN_TURN_UNITS = ("rounds", "turns")
DEFAULT_TRANSCRIPT_WINDOW = 20  # public turns shown to each agent

# condition defaults
DEFAULT_TEMPERATURE = 0.7
DEFAULT_TIMEOUT_FLOOR_MS = 60_000
DEFAULT_LEDGER_CHAR_BUDGET = 600

# gateway defaults
DEFAULT_RETRIES = 2
DEFAULT_BACKOFF_FACTOR = 0.5
RETRY_STATUS_CODES = (429, 500, 502, 503, 504)

# matrix and statistics defaults
DEFAULT_RUNS_PER_CELL = 15
DEFAULT_N_SHUFFLES = 10_000
DEFAULT_RESAMPLES = 10_000
MIN_RESAMPLES = 1_000
DEFAULT_CI_LEVEL = 0.95

# wire conventions
ACTION_HEADER_KEY = "ACTION:"
PRIVATE_OPEN = "<private>"
PRIVATE_CLOSE = "</private>"
LEDGER_OPEN = "<ledger>"
LEDGER_CLOSE = "</ledger>"
