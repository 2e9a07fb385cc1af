from dotenv import load_dotenv
import os
import logging

logger = logging.getLogger(__name__)

load_dotenv()

# Where run directories are created
OUTPUT_DIR = os.environ.get("TMLAB_OUTPUT_DIR", "runs")

# Size of the process pool used for sweeps (1 = run in-process)
WORKERS = int(os.environ.get("TMLAB_WORKERS", "1"))

LOG_LEVEL = os.environ.get("TMLAB_LOG_LEVEL", "INFO").upper()

# Optional override of the acceptance quick-level grid, e.g. "48x32"
QUICK_GRID = os.environ.get("TMLAB_QUICK_GRID")


def configure_logging(level: str = None):
    """Configure root logging once for the command line"""
    resolved = (level or LOG_LEVEL).upper()
    logging.basicConfig(
        level=getattr(logging, resolved, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logger.debug(f"Logging configured at {resolved}")


def quick_grid():
    """Parse TMLAB_QUICK_GRID into (n_q, n_theta), or None"""
    if not QUICK_GRID:
        return None
    try:
        n_q, n_theta = (int(part) for part in QUICK_GRID.lower().split("x"))
        return n_q, n_theta
    except ValueError:
        logger.warning(f"Ignoring malformed TMLAB_QUICK_GRID={QUICK_GRID!r}")
        return None
