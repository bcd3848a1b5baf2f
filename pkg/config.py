import os
from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")

SPDE_WORKERS = int(os.getenv("SPDE_WORKERS", "1"))
SPDE_OUTPUT_DIR = os.getenv("SPDE_OUTPUT_DIR", "results")
SPDE_DEFAULT_LEVEL = float(os.getenv("SPDE_DEFAULT_LEVEL", "0.05"))

SPDE_API_HOST = os.getenv("SPDE_API_HOST", "0.0.0.0")
SPDE_API_PORT = int(os.getenv("SPDE_API_PORT", "8000"))

# cap on L1 * L2 for the default two-dimensional truncation
SPDE_MAX_MODES_2D = int(os.getenv("SPDE_MAX_MODES_2D", "16384"))
