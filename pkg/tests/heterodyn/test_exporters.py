"""
🧪 Unit Tests — Artifact Writers
"""

import json

import numpy as np
import pandas as pd

from heterodyn.dynamics import IntegratorConfig, integrate
from heterodyn.exporters import diagnostics_frame, jsonable, trajectory_frame, write_csv, write_json
from heterodyn.protocols import Smith, assign_protocols
from heterodyn.typegrid import uniform_state


def test_trajectory_rows_follow_sample_node_strategy_order(unit_grid, entry_game):
    grid = unit_grid(3)
    cfg = IntegratorConfig(dt=0.1, t_end=0.2, sample_every=1)
    trajectory = integrate(entry_game, assign_protocols(grid, [Smith()]), uniform_state(grid, 2), grid, cfg)

    frame = trajectory_frame(trajectory)
    assert len(frame) == 3 * 3 * 2
    assert frame['node_index'].tolist()[:6] == [0, 0, 1, 1, 2, 2]
    assert frame['strategy_index'].tolist()[:4] == [0, 1, 0, 1]
    np.testing.assert_allclose(frame['x'].to_numpy()[-6:], trajectory.final_state.reshape(-1))


def test_missing_series_become_empty_cells(unit_grid, entry_game, tmp_path):
    """
    ✅ Without a potential the column is written but left blank.
    """
    grid = unit_grid(2)
    cfg = IntegratorConfig(dt=0.1, t_end=0.1, sample_every=1)
    trajectory = integrate(entry_game, assign_protocols(grid, [Smith()]), uniform_state(grid, 2), grid, cfg)

    path = write_csv(diagnostics_frame(trajectory, welfare=[1.0, 2.0]), tmp_path / 'nested' / 'diagnostics.csv')
    frame = pd.read_csv(path)
    assert frame['potential'].isna().all()
    assert frame['welfare'].tolist() == [1.0, 2.0]
    assert path.read_text(encoding='utf-8').splitlines()[0] == 'time,potential,welfare,pc,residual,renorm'


def test_json_replaces_non_finite_numbers(tmp_path):
    payload = {'gap': np.float64('nan'), 'values': np.array([1.0, np.inf]), 'count': np.int64(3)}

    assert jsonable(payload) == {'gap': None, 'values': [1.0, None], 'count': 3}
    path = write_json(payload, tmp_path / 'summary.json')
    assert json.loads(path.read_text(encoding='utf-8')) == {'gap': None, 'values': [1.0, None], 'count': 3}
