"""Synthetic 2D branching-trajectory corpus and trajectory file I/O.

Trajectories live in the unit square. Each one starts at the origin (plus
a tiny jitter), moves to a central branch point reached around t=10, then
continues to one of two goal regions (or, for the held-out test of
unhabituated goals, straight ahead to a central region). The goal is
reached between t=20 and t=30 and the trajectory then stays put until the
final step. Generation is a seeded cubic spline through jittered control
points, so a (seed, n, geometry, noise_scale) tuple always reproduces the
same corpus bit for bit.

File format (plain text, comma separated):

    line 1:        version,T,dims            e.g. "1,30,2"
    remaining:     traj_id,t,<dims floats>,label,seed

one row per timestep, rows of one trajectory contiguous and ordered by t.
The format is length-general: T is whatever the header says.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError, GenerationError, ShapeError

FILE_VERSION = 1
MAX_STEP = 0.15
START_JITTER = 0.01


@dataclass(frozen=True)
class TaskGeometry:
    """Branch point, goal regions, and obstacle boxes of the 2D task.

    Obstacles are (xmin, ymin, xmax, ymax) boxes.
    """

    branch: tuple = (0.38, 0.42)
    left_goal: tuple = (0.2, 0.8)
    right_goal: tuple = (0.85, 0.3)
    center_goal: tuple = (0.525, 0.55)
    goal_radius: float = 0.12
    goal_sigma: float = 0.05
    obstacles: tuple = ((0.6, 0.68, 0.85, 0.9), (0.48, 0.04, 0.72, 0.24))

    def __post_init__(self):
        for name in ("left_goal", "right_goal", "center_goal"):
            c = np.asarray(getattr(self, name))
            for box in self.obstacles:
                if _circle_box_overlap(c, self.goal_radius, box):
                    raise ConfigError(f"{name} region overlaps obstacle {box}")

    def goal_center(self, label):
        return {"left": self.left_goal, "right": self.right_goal,
                "center": self.center_goal}[label]

    def in_obstacle(self, points):
        """Boolean mask: which points fall inside any obstacle box."""
        pts = np.atleast_2d(points)
        hit = np.zeros(len(pts), dtype=bool)
        for (x0, y0, x1, y1) in self.obstacles:
            hit |= ((pts[:, 0] >= x0) & (pts[:, 0] <= x1)
                    & (pts[:, 1] >= y0) & (pts[:, 1] <= y1))
        return hit


def _circle_box_overlap(center, radius, box):
    x0, y0, x1, y1 = box
    cx = np.clip(center[0], x0, x1)
    cy = np.clip(center[1], y0, y1)
    return np.hypot(center[0] - cx, center[1] - cy) <= radius


@dataclass
class Trajectory:
    """One T x 2 position sequence with its goal label and source seed."""

    positions: np.ndarray
    label: str
    seed: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ShapeError("positions must be a (T, 2) array")
        if self.label not in ("left", "right", "center"):
            raise ConfigError(f"unknown goal label '{self.label}'")

    @property
    def T(self):
        return self.positions.shape[0]


def _spline_path(rng, geometry, label, noise_scale, T):
    """One candidate trajectory; may violate constraints (caller checks)."""
    goal_center = np.asarray(geometry.goal_center(label), dtype=float)
    while True:
        goal = goal_center + geometry.goal_sigma * rng.standard_normal(2)
        if np.linalg.norm(goal - goal_center) <= geometry.goal_radius - 0.01:
            break
    t_goal = int(rng.integers(20, T + 1))
    start = rng.uniform(0.0, START_JITTER * 0.7, size=2)
    branch = np.asarray(geometry.branch) + rng.normal(0.0, 0.008, size=2)
    pre = start + 0.5 * (branch - start) + rng.normal(0.0, 0.01, size=2)
    seg = goal - branch
    perp = np.array([-seg[1], seg[0]])
    n = np.linalg.norm(perp)
    perp = perp / n if n > 0 else perp
    post = branch + 0.5 * seg + perp * rng.normal(0.0, 0.02)

    s_branch = 10.0 / t_goal
    knots_s = np.array([0.0, 0.5 * s_branch, s_branch,
                        s_branch + 0.5 * (1.0 - s_branch), 1.0])
    knots = np.stack([start, pre, branch, post, goal])
    spline = CubicSpline(knots_s, knots, axis=0)
    s = np.arange(t_goal) / (t_goal - 1.0)
    pts = spline(s)
    if noise_scale > 0:
        jitter = rng.normal(0.0, noise_scale, size=pts.shape)
        jitter[0] = 0.0
        pts = pts + jitter
    full = np.vstack([pts, np.tile(pts[-1], (T - t_goal, 1))])
    return np.clip(full, 0.0, 1.0)


def _valid(points, geometry, label):
    if np.any(points < 0.0) or np.any(points > 1.0):
        return False
    if np.linalg.norm(points[0]) > START_JITTER * np.sqrt(2):
        return False
    steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
    if np.any(steps > MAX_STEP):
        return False
    if np.any(geometry.in_obstacle(points)):
        return False
    goal_center = np.asarray(geometry.goal_center(label))
    if np.linalg.norm(points[-1] - goal_center) > geometry.goal_radius:
        return False
    return True


def _generate_one(seed, index, geometry, label, noise_scale, T, max_retries=60):
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    rng = np.random.Generator(np.random.PCG64(ss))
    for _ in range(max_retries):
        pts = _spline_path(rng, geometry, label, noise_scale, T)
        if _valid(pts, geometry, label):
            return Trajectory(positions=pts, label=label, seed=seed)
    raise GenerationError(
        f"could not generate a valid '{label}' trajectory (index {index}) "
        f"within {max_retries} retries; check geometry/obstacles")


def generate_dataset(seed, n, geometry=None, noise_scale=0.005, T=30):
    """Exactly n/2 left-goal and n/2 right-goal trajectories, deterministic."""
    if n % 2 != 0:
        raise ConfigError("n must be even for an exact left/right split")
    geometry = geometry or TaskGeometry()
    labels = ["left", "right"] * (n // 2)
    return [_generate_one(seed, i, geometry, lab, noise_scale, T)
            for i, lab in enumerate(labels)]


def generate_center_goal_set(seed, n, geometry=None, noise_scale=0.005, T=30):
    """Ground-truth trajectories going straight on to the untrained central region."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    geometry = geometry or TaskGeometry()
    out = []
    for i in range(n):
        traj = _generate_one(seed, 10_000 + i, geometry, "center", noise_scale, T)
        for trained in ("left", "right"):
            c = np.asarray(geometry.goal_center(trained))
            if np.linalg.norm(traj.positions[-1] - c) <= geometry.goal_radius:
                raise GenerationError("central-goal endpoint fell inside a "
                                      f"trained goal region ({trained})")
        out.append(traj)
    return out


def save_trajectories(path, trajectories):
    """Write trajectories in the documented CSV layout."""
    if not trajectories:
        raise ConfigError("refusing to write an empty trajectory file")
    T = trajectories[0].T
    dims = trajectories[0].positions.shape[1]
    with open(path, "w") as fh:
        fh.write(f"{FILE_VERSION},{T},{dims}\n")
        for i, traj in enumerate(trajectories):
            if traj.T != T or traj.positions.shape[1] != dims:
                raise ConfigError("all trajectories in one file must share T and dims")
            for t in range(T):
                coords = ",".join(repr(float(v)) for v in traj.positions[t])
                fh.write(f"{i},{t},{coords},{traj.label},{traj.seed}\n")


def load_trajectories(path):
    """Read a trajectory file back; malformed input raises with a line number."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError:
        raise ConfigError(f"trajectory file not found: {path}") from None
    if not lines:
        raise ConfigError(f"{path}: empty file")
    head = lines[0].split(",")
    if len(head) != 3:
        raise ConfigError(f"{path}:1: header must be 'version,T,dims'")
    try:
        version, T, dims = (int(v) for v in head)
    except ValueError:
        raise ConfigError(f"{path}:1: non-integer header fields") from None
    if version != FILE_VERSION:
        raise ConfigError(f"{path}:1: unsupported format version {version}")
    rows = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 4 + dims:
            raise ConfigError(f"{path}:{lineno}: expected {4 + dims} fields, "
                              f"got {len(parts)}")
        try:
            tid = int(parts[0])
            t = int(parts[1])
            coords = [float(v) for v in parts[2:2 + dims]]
            seed = int(parts[-1])
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: malformed numeric field") from None
        label = parts[2 + dims]
        rows.setdefault(tid, {})[t] = (coords, label, seed)
    out = []
    for tid in sorted(rows):
        entries = rows[tid]
        if sorted(entries) != list(range(T)):
            raise ConfigError(f"{path}: trajectory {tid} is missing timesteps "
                              f"(expected 0..{T - 1})")
        pts = np.array([entries[t][0] for t in range(T)])
        label = entries[0][1]
        seed = entries[0][2]
        out.append(Trajectory(positions=pts, label=label, seed=seed))
    return out
