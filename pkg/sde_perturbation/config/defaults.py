"""Default configuration and constants for SDE Perturbation Lab."""

from typing import Dict, List, Tuple

# Experiment kinds, one CLI subcommand each
EXPERIMENT_KINDS: Tuple[str, ...] = (
    'ag-verify', 'iag-weak', 'iag-pathwise', 'iag-duality',
    'vdp-rate', 'mgf-check', 'expmoment-check', 'flowmoment-check',
)

# Fixed results.csv columns per kind
CSV_COLUMNS: Dict[str, List[str]] = {
    'ag-verify': ['outer_steps', 'inner_steps', 'component', 'lhs', 'rhs', 'residual', 'lhs_halving_gap'],
    'iag-weak': ['term', 'component', 'mean', 'se', 'samples', 'diverged'],
    'iag-pathwise': ['outer_steps', 'rms_residual', 'se', 'ratio', 'rms_lhs', 'rms_lebesgue',
                     'samples', 'diverged'],
    'iag-duality': ['functional', 'component', 'lhs_mean', 'lhs_se', 'rhs_mean', 'rhs_se', 'gap',
                    'combined_se', 'samples'],
    'vdp-rate': ['N', 'rms', 'se', 'samples', 'diverged'],
    'mgf-check': ['case', 'a', 'b', 'c', 'closed_form', 'mc_mean', 'se', 'z'],
    'expmoment-check': ['node', 'time', 'mean', 'se', 'bound'],
    'flowmoment-check': ['r', 't', 'moment_x1', 'se_x1', 'moment_x2', 'se_x2', 'samples'],
}

# Van der Pol reference setup: alpha = beta = gamma = delta = 1, xi = 0, T = 1
DEFAULT_VDP: Dict[str, object] = {
    'alpha': 1.0,
    'beta': 1.0,
    'gamma': 1.0,
    'delta': 1.0,
    'xi': (0.0, 0.0),
    'horizon': 1.0,
}

# Monte-Carlo driver
DEFAULT_BATCH_SIZE = 500
DEFAULT_WORKERS = 1
MAX_DIVERGENCE_FRACTION = 0.001

# Acceptance tolerances
DEFAULT_Z_THRESHOLD = 3.0
DEFAULT_SLOPE_BAND = (-1.25, -0.35)
SLOPE_SEED_TOLERANCE = 0.05
DEFAULT_RATIO_BAND = (1.3, 3.0)
DEFAULT_AG_RESIDUAL_TOL = 1e-8
DEFAULT_AG_MIN_RATIO = 1.5
DEFAULT_MGF_CASES = 20
MGF_MAX_EXPONENT = 0.9
MGF_MAX_WEIGHT_SPREAD = 1.0

# Reference strong-rate study
RATE_STUDY_LEVELS: Tuple[int, ...] = (64, 128, 256, 512, 1024, 2048)
RATE_STUDY_REFERENCE_STEPS = 2 ** 15
RATE_STUDY_SAMPLES = 20000

# Output layout
ENV_OUTPUT_DIR = 'SDE_PERTURBATION_OUT'
DEFAULT_OUTPUT_DIR = 'results'
REPORT_FILE = 'report.json'
TABLE_FILE = 'results.csv'
CONFIG_ECHO_FILE = 'config.ini'

# Configuration documents
SUPPORTED_FORMAT_VERSION = '1.0'

# Process exit codes
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_EXCESSIVE_DIVERGENCE = 3
