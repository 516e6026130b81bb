"""
Result Writer - CSV tables, surface grids and run manifests
"""

import json
import logging
import os
import platform
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd
import scipy

from ..core.errors import InvalidParameterError
from ..core.rate_optimizer import SURFACE_COLUMNS, SweepPoint, to_frame, to_matrix

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.16e"
RESULT_COLUMNS = ["lambda_s", "lambda_t", "eps_analytic", "eps_sim_mean", "eps_sim_ci95",
                  "discipline", "scheduler", "seed", "replications", "status"]
STATUSES = ("ok", "infeasible", "warned")


@dataclass
class ResultRow:
    lambda_s: float
    lambda_t: float
    eps_analytic: Optional[float]
    eps_sim_mean: Optional[float]
    eps_sim_ci95: Optional[float]
    discipline: str
    scheduler: str
    seed: Optional[int]
    replications: Optional[int]
    status: str = "ok"

    def __post_init__(self):
        if self.status not in STATUSES:
            raise InvalidParameterError(f"Unknown row status: {self.status!r}")
        if self.status == "infeasible":
            self.eps_analytic = self.eps_sim_mean = self.eps_sim_ci95 = None


def _ensure_dir(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def results_frame(rows: Sequence[ResultRow]) -> pd.DataFrame:
    frame = pd.DataFrame([asdict(row) for row in rows], columns=RESULT_COLUMNS)
    for column in ("seed", "replications"):
        frame[column] = frame[column].astype("Int64")
    return frame


def write_results(rows: Sequence[ResultRow], path: str) -> str:
    """Write result rows; missing numbers are written as empty fields."""
    _ensure_dir(path)
    results_frame(rows).to_csv(path, index=False, na_rep="", float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {len(rows)} result row(s) to {path}")
    return path


def emit_surface(points: Sequence[SweepPoint], path: str) -> str:
    """
    Write a sweep as a long-format surface file.

    Args:
        points: Sweep nodes forming a rectangular lambda_s x lambda_t grid
        path: Output CSV path

    Returns:
        The path written, with header lambda_s,lambda_t,eps,status in
        lambda_s-major ascending order

    Raises:
        RaggedGridError: If the nodes do not form a rectangular grid
    """
    frame = to_frame(points)
    to_matrix(frame)
    frame = frame.sort_values(["lambda_s", "lambda_t"], kind="mergesort").reset_index(drop=True)
    _ensure_dir(path)
    frame[SURFACE_COLUMNS].to_csv(path, index=False, na_rep="", float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {len(frame)}-node surface to {path}")
    return path


def package_versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def write_manifest(path: str, manifest: Dict[str, Any]) -> str:
    """Write the run manifest as sorted, indented JSON."""
    _ensure_dir(path)
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    return path

