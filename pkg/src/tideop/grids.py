"""Spatial grids, trajectory containers, and on-disk dataset format.

Datasets are a directory holding manifest.json plus raw little-endian
float64 arrays (u.f64, ut.f64, t.f64, seeds.f64), row-major with the
trajectory index slowest. Round trips are bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EQUATIONS = ("heat1d", "burgers1d", "allencahn2d")
SPLITS = ("train", "validation", "test")


class DatasetFormatError(ValueError):
    """Manifest or array file does not match the expected layout."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform 1-D grid on [x_min, x_max].

    Periodic grids exclude the duplicate endpoint: node k sits at
    x_min + k*L/n. Non-periodic grids include both ends: x_min + k*L/(n-1).
    """

    n_points: int
    x_min: float = 0.0
    x_max: float = 1.0
    periodic: bool = False

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("grid needs at least 2 points")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def length(self):
        return self.x_max - self.x_min

    @property
    def spacing(self):
        return self.length / (self.n_points if self.periodic else self.n_points - 1)

    @property
    def nodes(self):
        k = np.arange(self.n_points)
        return self.x_min + k * self.spacing

    @property
    def shape(self):
        return (self.n_points,)


@dataclass(frozen=True)
class Grid2D:
    """Uniform tensor-product 2-D grid; nodes follow the 1-D convention per axis."""

    nx: int
    ny: int
    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0
    periodic_x: bool = True
    periodic_y: bool = True

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 points per axis")

    @property
    def x_axis(self):
        return Grid1D(self.nx, self.x_min, self.x_max, self.periodic_x)

    @property
    def y_axis(self):
        return Grid1D(self.ny, self.y_min, self.y_max, self.periodic_y)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def nodes(self):
        """(nx*ny, 2) coordinate list, x slowest (row-major over the field)."""
        xs, ys = self.x_axis.nodes, self.y_axis.nodes
        xx, yy = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass(frozen=True)
class FieldSnapshot:
    """One field state: values, stored time derivative, time stamp."""

    u: np.ndarray
    u_t: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=np.float64))
        object.__setattr__(self, "u_t", np.asarray(self.u_t, dtype=np.float64))
        if self.u.shape != self.u_t.shape:
            raise ValueError("u and u_t shapes differ")


@dataclass(frozen=True)
class Trajectory:
    """Time-stacked field history for one initial condition.

    u and u_t have shape (n_times, *spatial); times are strictly
    increasing and start at 0.
    """

    times: np.ndarray
    u: np.ndarray
    u_t: np.ndarray
    ic_seed: int

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=np.float64))
        object.__setattr__(self, "u", np.asarray(self.u, dtype=np.float64))
        object.__setattr__(self, "u_t", np.asarray(self.u_t, dtype=np.float64))
        if self.times.ndim != 1 or len(self.times) == 0:
            raise ValueError("times must be a non-empty 1-D array")
        if self.times[0] != 0.0:
            raise ValueError("trajectory must start at t=0")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.u.shape != self.u_t.shape or self.u.shape[0] != len(self.times):
            raise ValueError("u/u_t must be (n_times, *spatial) matching times")

    @property
    def n_times(self):
        return len(self.times)

    def snapshot(self, i):
        return FieldSnapshot(self.u[i], self.u_t[i], float(self.times[i]))

    def at_time(self, t):
        idx = np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))
        if len(idx) == 0:
            raise KeyError(f"no snapshot at t={t}")
        return self.snapshot(int(idx[0]))


@dataclass
class DatasetContainer:
    """A set of equal-length trajectories plus generation metadata."""

    equation: str
    grid: object
    dt: float
    seed: int
    split: str
    trajectories: list = field(default_factory=list)
    branch_scale: float = 1.0

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise DatasetFormatError(
                f"unknown equation '{self.equation}'; allowed: {list(EQUATIONS)}"
            )
        if self.split not in SPLITS:
            raise DatasetFormatError(f"unknown split '{self.split}'; allowed: {list(SPLITS)}")
        if self.trajectories:
            n = self.trajectories[0].n_times
            if any(tr.n_times != n for tr in self.trajectories):
                raise ValueError("all trajectories in a container must share n_times")

    @property
    def n_trajectories(self):
        return len(self.trajectories)

    @property
    def n_times(self):
        return self.trajectories[0].n_times if self.trajectories else 0

    def stack(self, attr):
        return np.stack([getattr(tr, attr) for tr in self.trajectories])


def _grid_manifest(grid):
    if isinstance(grid, Grid1D):
        return {"nx": grid.n_points, "ny": 1, "periodic_x": grid.periodic, "periodic_y": False}
    return {"nx": grid.nx, "ny": grid.ny, "periodic_x": grid.periodic_x, "periodic_y": grid.periodic_y}


def _grid_from_manifest(g):
    if g["ny"] == 1:
        return Grid1D(g["nx"], periodic=g["periodic_x"])
    return Grid2D(g["nx"], g["ny"], periodic_x=g["periodic_x"], periodic_y=g["periodic_y"])


def write_dataset(container, path):
    """Write manifest.json plus raw f64 arrays into directory `path`."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    arrays = []
    if container.n_trajectories:
        spatial = container.trajectories[0].u.shape[1:]
        payload = {
            "u": container.stack("u"),
            "ut": container.stack("u_t"),
            "t": container.stack("times"),
            "seeds": np.array([float(tr.ic_seed) for tr in container.trajectories]),
        }
        for name, arr in payload.items():
            arrays.append({"name": name, "dtype": "f64le", "shape": list(arr.shape)})
            arr.astype("<f8").tofile(path / f"{name}.f64")
    manifest = {
        "equation": container.equation,
        "grid": _grid_manifest(container.grid),
        "dt": container.dt,
        "n_trajectories": container.n_trajectories,
        "n_times": container.n_times,
        "branch_scale": container.branch_scale,
        "seed": container.seed,
        "split": container.split,
        "arrays": arrays,
    }
    with open(path / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)
    return path


def read_dataset(path):
    """Read a dataset directory back into a DatasetContainer (bit-exact)."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise DatasetFormatError(f"missing {manifest_path}")
    try:
        with open(manifest_path) as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"corrupt manifest.json in {path}: {e}") from e
    required = {
        "equation",
        "grid",
        "dt",
        "n_trajectories",
        "n_times",
        "branch_scale",
        "seed",
        "split",
        "arrays",
    }
    if set(manifest) != required:
        raise DatasetFormatError(
            f"manifest.json in {path} has keys {sorted(manifest)}, expected {sorted(required)}"
        )
    if manifest["equation"] not in EQUATIONS:
        raise DatasetFormatError(
            f"unknown equation '{manifest['equation']}' in manifest.json; allowed: {list(EQUATIONS)}"
        )
    data = {}
    for entry in manifest["arrays"]:
        fname = path / f"{entry['name']}.f64"
        if entry["dtype"] != "f64le":
            raise DatasetFormatError(f"{fname}: unsupported dtype '{entry['dtype']}'")
        if not fname.exists():
            raise DatasetFormatError(f"missing array file {fname}")
        raw = np.fromfile(fname, dtype="<f8")
        expect = int(np.prod(entry["shape"]))
        if raw.size != expect:
            raise DatasetFormatError(
                f"{fname}: has {raw.size} float64 values, manifest shape {entry['shape']} needs {expect}"
            )
        data[entry["name"]] = raw.reshape(entry["shape"])
    grid = _grid_from_manifest(manifest["grid"])
    trajectories = []
    if manifest["n_trajectories"]:
        for name in ("u", "ut", "t", "seeds"):
            if name not in data:
                raise DatasetFormatError(f"manifest.json in {path} lists no '{name}' array")
        for i in range(manifest["n_trajectories"]):
            trajectories.append(
                Trajectory(data["t"][i], data["u"][i], data["ut"][i], int(data["seeds"][i]))
            )
    return DatasetContainer(
        equation=manifest["equation"],
        grid=grid,
        dt=manifest["dt"],
        seed=manifest["seed"],
        split=manifest["split"],
        trajectories=trajectories,
        branch_scale=manifest["branch_scale"],
    )


def downsample_time(traj, n_times):
    """Linearly interpolate a trajectory onto n_times evenly spaced times.

    The first and last states are copied through exactly.
    """
    if n_times < 2:
        raise ValueError("need at least 2 output times")
    new_times = np.linspace(traj.times[0], traj.times[-1], n_times)
    flat_u = traj.u.reshape(traj.n_times, -1)
    flat_ut = traj.u_t.reshape(traj.n_times, -1)
    u = np.empty((n_times, flat_u.shape[1]))
    ut = np.empty_like(u)
    for j in range(flat_u.shape[1]):
        u[:, j] = np.interp(new_times, traj.times, flat_u[:, j])
        ut[:, j] = np.interp(new_times, traj.times, flat_ut[:, j])
    u[0], u[-1] = flat_u[0], flat_u[-1]
    ut[0], ut[-1] = flat_ut[0], flat_ut[-1]
    spatial = traj.u.shape[1:]
    return Trajectory(new_times, u.reshape(n_times, *spatial), ut.reshape(n_times, *spatial), traj.ic_seed)
