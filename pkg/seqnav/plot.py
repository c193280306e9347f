'''
Trajectory logs and their SVG rendering.

The path is drawn as a line collection coloured by planar speed on the
``viridis`` scale (0 to ``v_max``), goals as arrows along their heading and
switch / termination events as markers. Each marker group carries an SVG id
``event-<name>``.
'''

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from .env import TRAJ_COLUMNS
from .errors import TrajectoryParseError

logger = logging.getLogger(__name__)

EVENTS = ('-', 'switch_direct', 'switch_stop', 'fall', 'timeout', 'complete')

_MARKERS = {
    'switch_direct': dict(marker='o', facecolors='none', edgecolors='tab:blue', s=60),
    'switch_stop': dict(marker='s', facecolors='none', edgecolors='tab:orange', s=60),
    'fall': dict(marker='x', c='tab:red', s=80),
    'complete': dict(marker='*', c='tab:green', s=120),
    'timeout': dict(marker='D', facecolors='none', edgecolors='gray', s=50),
}


@dataclass
class Trajectory:
    '''Parsed trajectory log: goal rows ``(G, 3)`` and the sample table.'''
    goals: np.ndarray
    samples: pd.DataFrame

    @property
    def points(self) -> np.ndarray:
        return self.samples[['x', 'y']].to_numpy(dtype=float)


def load_trajectory(path: Union[str, Path]) -> Trajectory:
    '''
    Parse a trajectory CSV.

    :raises TrajectoryParseError: with the 1-based line number of the first bad line
    '''
    raw = Path(path).read_bytes()
    try:
        text = raw.decode('utf-8')
    except UnicodeDecodeError as e:
        raise TrajectoryParseError('not UTF-8 text', line=raw.count(b'\n', 0, e.start) + 1) from None
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        raise TrajectoryParseError('empty trajectory file', line=1)

    goals: list[tuple[float, float, float]] = []
    header_seen = False
    rows: list[list[str]] = []
    numbers: list[int] = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith('#'):
            body = stripped.lstrip('#').strip()
            if body.startswith('goal,'):
                parts = body.split(',')[1:]
                try:
                    if len(parts) != 3:
                        raise ValueError
                    goals.append(tuple(float(p) for p in parts))
                except ValueError:
                    raise TrajectoryParseError(f'malformed goal line {stripped!r}', line=lineno) from None
            continue
        if not header_seen:
            if tuple(c.strip() for c in stripped.split(',')) != TRAJ_COLUMNS:
                raise TrajectoryParseError(f'expected header {",".join(TRAJ_COLUMNS)}', line=lineno)
            header_seen = True
            continue
        fields = stripped.split(',')
        if len(fields) != len(TRAJ_COLUMNS):
            raise TrajectoryParseError(f'expected {len(TRAJ_COLUMNS)} fields, got {len(fields)}', line=lineno)
        rows.append(fields)
        numbers.append(lineno)

    if not header_seen:
        raise TrajectoryParseError('missing header line', line=len(lines))
    if not rows:
        raise TrajectoryParseError('trajectory has no samples', line=len(lines))

    df = pd.DataFrame(rows, columns=TRAJ_COLUMNS)
    for col in TRAJ_COLUMNS[:-1]:
        values = pd.to_numeric(df[col].str.strip(), errors='coerce')
        bad = values.isna() | ~np.isfinite(values.to_numpy(dtype=float))
        if bad.any():
            i = int(np.flatnonzero(bad.to_numpy())[0])
            raise TrajectoryParseError(f'column {col!r}: not a finite number: {rows[i][TRAJ_COLUMNS.index(col)]!r}',
                                       line=numbers[i])
        df[col] = values
    df['k'] = df['k'].astype(int)
    df['event'] = df['event'].str.strip()
    unknown = ~df['event'].isin(EVENTS)
    if unknown.any():
        i = int(np.flatnonzero(unknown.to_numpy())[0])
        raise TrajectoryParseError(f'unknown event {df["event"].iloc[i]!r}', line=numbers[i])
    return Trajectory(np.array(goals, dtype=float).reshape(-1, 3), df)


def trajectory_segments(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    '''``(S, 2, 2)`` consecutive point pairs and the speed at each segment start.'''
    pts = traj.points
    segs = np.stack([pts[:-1], pts[1:]], axis=1)
    return segs, traj.samples['speed'].to_numpy(dtype=float)[:-1]


def event_markers(traj: Trajectory) -> dict[str, np.ndarray]:
    '''Coordinates ``(M, 2)`` of every sample carrying each event other than ``-``.'''
    out = {}
    for name in EVENTS[1:]:
        mask = (traj.samples['event'] == name).to_numpy()
        if mask.any():
            out[name] = traj.points[mask]
    return out


def export_trajectory_plot(traj_csv: Union[str, Path], out_path: Union[str, Path],
                           v_max: Optional[float] = None, title: Optional[str] = None) -> Path:
    '''
    Render ``traj_csv`` to an SVG at ``out_path``. Nothing is written when the
    log does not parse.

    :param v_max:   top of the colour scale; the largest logged speed by default
    '''
    traj = load_trajectory(traj_csv)

    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt
    from matplotlib.collections import LineCollection
    from matplotlib.colors import Normalize

    segs, speed = trajectory_segments(traj)
    top = v_max if v_max is not None else max(float(traj.samples['speed'].max()), 1e-6)

    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    try:
        lc = LineCollection(segs, array=speed, cmap='viridis', norm=Normalize(0.0, top), linewidths=2.5)
        lc.set_gid('path')
        ax.add_collection(lc)
        cbar = fig.colorbar(lc, ax=ax, fraction=0.046, pad=0.04)
        cbar.set_label('speed (m/s)')

        if len(traj.goals):
            g = traj.goals
            q = ax.quiver(g[:, 0], g[:, 1], np.cos(g[:, 2]), np.sin(g[:, 2]), color='crimson',
                          angles='xy', scale_units='xy', scale=2.0, width=0.006, zorder=4)
            q.set_gid('goals')
        for name, xy in event_markers(traj).items():
            sc = ax.scatter(xy[:, 0], xy[:, 1], zorder=5, label=name.replace('_', ' '), **_MARKERS[name])
            sc.set_gid(f'event-{name}')

        pts = np.vstack([traj.points, traj.goals[:, :2]]) if len(traj.goals) else traj.points
        pad = 0.5
        ax.set_xlim(pts[:, 0].min() - pad, pts[:, 0].max() + pad)
        ax.set_ylim(pts[:, 1].min() - pad, pts[:, 1].max() + pad)
        ax.set_aspect('equal', adjustable='datalim')
        ax.set_xlabel('x [m]')
        ax.set_ylabel('y [m]')
        ax.grid(True, alpha=0.4)
        if title:
            ax.set_title(title)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc='best', fontsize='small')

        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out_path, format='svg', bbox_inches='tight')
    finally:
        plt.close(fig)
    logger.info('wrote %s', out_path)
    return out_path
