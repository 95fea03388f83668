"""Process-wide defaults for WaveLab, read from the environment."""

import os

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

LOG_LEVEL = os.getenv("WAVELAB_LOG_LEVEL", "INFO")
OUT_DIR = os.getenv("WAVELAB_OUT_DIR", "results")

# Lower bound on xi^2 + b^2 below which the branches are not separated
GAP_FLOOR = float(os.getenv("WAVELAB_GAP_FLOOR", "1e-6"))

# Largest per-axis grid size assembled as a dense matrix
DENSE_LIMIT = int(os.getenv("WAVELAB_DENSE_LIMIT", "48"))

# Centered finite-difference step used when a symbol has no closed-form derivative
FD_STEP = float(os.getenv("WAVELAB_FD_STEP", "1e-5"))
