#!/usr/bin/env python3
"""
Environment Check Utility

Verifies that the numerical stack is importable at supported versions and
that the settings read from the environment are usable.
"""

import importlib
import logging
import re
import sys
from pathlib import Path
from typing import Dict, Tuple

# Add parent directory to path
parent_dir = Path(__file__).parent.parent.parent
sys.path.append(str(parent_dir))

from app.config.settings import (
    EXTENSION_CAP,
    LOG_FILE,
    OUTPUT_DIR,
    SIGMA_THRESHOLD,
    SOLVER_TOLERANCE,
    STEP_CAP,
    VERTEX_BUDGET,
)

logger = logging.getLogger(__name__)

REQUIRED_PACKAGES: Dict[str, Tuple[int, int]] = {
    "numpy": (1, 26),
    "scipy": (1, 12),
    "networkx": (3, 0),
    "pydantic": (2, 0),
    "dotenv": (0, 0),
}


def _version_tuple(version: str) -> Tuple[int, int]:
    parts = []
    for token in version.split(".")[:2]:
        match = re.match(r"\d+", token)
        parts.append(int(match.group()) if match else 0)
    while len(parts) < 2:
        parts.append(0)
    return parts[0], parts[1]


def check_packages() -> bool:
    ok = True
    for name, minimum in REQUIRED_PACKAGES.items():
        try:
            module = importlib.import_module(name)
        except ImportError:
            logger.error(f"Missing required package: {name}")
            ok = False
            continue
        version = getattr(module, "__version__", "0.0")
        if _version_tuple(version) < minimum:
            logger.error(f"{name} {version} is older than {minimum[0]}.{minimum[1]}")
            ok = False
        else:
            logger.info(f"{name} {version}")
    return ok


def check_settings() -> bool:
    problems = []
    if STEP_CAP <= 0:
        problems.append("STEP_CAP must be positive")
    if EXTENSION_CAP <= 0:
        problems.append("EXTENSION_CAP must be positive")
    if VERTEX_BUDGET <= 0:
        problems.append("VERTEX_BUDGET must be positive")
    if SIGMA_THRESHOLD <= 0:
        problems.append("SIGMA_THRESHOLD must be positive")
    if not 0 < SOLVER_TOLERANCE < 1:
        problems.append("SOLVER_TOLERANCE must lie in (0, 1)")
    for problem in problems:
        logger.error(problem)
    return not problems


def check_environment() -> bool:
    """Check if the environment is set up correctly."""

    logger.info("Checking environment setup...")
    if not (check_packages() and check_settings()):
        return False

    output_dir = Path(OUTPUT_DIR)
    if not output_dir.exists():
        logger.info(f"Creating output directory: {output_dir}")
        output_dir.mkdir(parents=True, exist_ok=True)

    if LOG_FILE:
        log_dir = Path(LOG_FILE).parent
        if not log_dir.exists():
            logger.info(f"Creating logs directory: {log_dir}")
            log_dir.mkdir(parents=True, exist_ok=True)

    logger.info("Environment setup complete!")
    return True


if __name__ == "__main__":
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    if check_environment():
        print("✅ Environment is set up correctly!")
        sys.exit(0)
    else:
        print("❌ Environment setup failed. Check the logs for details.")
        sys.exit(1)
