import os
from dotenv import load_dotenv
from pathlib import Path

# Load environment variables from .env file
load_dotenv()

# Base directory
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("LOG_FILE")

# Reproducibility
DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", 20240607))
DEFAULT_SAMPLES = int(os.getenv("DEFAULT_SAMPLES", 10000))

# Walk and process safety caps
STEP_CAP = int(os.getenv("STEP_CAP", 100_000_000))
EXTENSION_CAP = int(os.getenv("EXTENSION_CAP", 1_000_000))

# Graph families
VERTEX_BUDGET = int(os.getenv("VERTEX_BUDGET", 1_000_000))
DEFAULT_DEPTH = int(os.getenv("DEFAULT_DEPTH", 5))

# Linear solves
ITERATIVE_SOLVER_THRESHOLD = int(os.getenv("ITERATIVE_SOLVER_THRESHOLD", 100_000))
SOLVER_TOLERANCE = float(os.getenv("SOLVER_TOLERANCE", 1e-10))

# Monte Carlo acceptance
SIGMA_THRESHOLD = float(os.getenv("SIGMA_THRESHOLD", 3.0))

# Output
OUTPUT_DIR = os.getenv("OUTPUT_DIR", str(BASE_DIR / "results"))

# Experiment kinds
EXPERIMENT_KINDS = {
    "SAMPLE_UST": "sample_ust",
    "SAMPLE_INTERLACEMENT": "sample_interlacement",
    "DYNAMICS": "dynamics",
    "HITTING": "hitting",
    "CAPACITY": "capacity",
    "COUNTEREXAMPLE": "counterexample",
    "VERIFY": "verify",
}

# Exit codes
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
