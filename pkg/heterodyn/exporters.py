"""
📤 Artifact Writers — heterodyn

CSV and JSON writers for command artifacts. CSVs go through pandas (RFC-4180
quoting, '.' decimal, shortest round-trip float text), so identical runs give
byte-identical files.

- ``trajectory.csv``: one row per (sample, node, strategy) with columns
  ``time, node_index, strategy_index, x, v``.
- ``diagnostics.csv``: one row per sample with columns
  ``time, potential, welfare, pc, residual, renorm`` (empty cells where a series does not apply).
- ``*.json``: UTF-8, indented; NaN and infinities become ``null``.
"""

import json
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from heterodyn.dynamics import Trajectory

logger = logging.getLogger(__name__)


def trajectory_frame(trajectory: Trajectory) -> pd.DataFrame:
    n, K, S = trajectory.states.shape
    return pd.DataFrame({
        'time': np.repeat(trajectory.times, K * S),
        'node_index': np.tile(np.repeat(np.arange(K), S), n),
        'strategy_index': np.tile(np.arange(S), n * K),
        'x': trajectory.states.reshape(-1),
        'v': trajectory.velocities.reshape(-1),
    })


def diagnostics_frame(trajectory: Trajectory, potential=None, welfare=None) -> pd.DataFrame:
    blank = np.full(trajectory.times.shape, np.nan)
    return pd.DataFrame({
        'time': trajectory.times,
        'potential': blank if potential is None else np.asarray(potential),
        'welfare': blank if welfare is None else np.asarray(welfare),
        'pc': trajectory.pc,
        'residual': trajectory.residual,
        'renorm': trajectory.renorm,
    })


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator='\n')
    logger.info("Wrote %s (%d rows)", path, len(frame))
    return path


def jsonable(value):
    """Plain JSON types for numpy values; non-finite floats become ``None``."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.generic):
        return jsonable(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(payload: dict, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(payload), indent=2, allow_nan=False) + '\n', encoding='utf-8')
    logger.info("Wrote %s", path)
    return path
