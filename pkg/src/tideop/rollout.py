"""Inference: classical time integration over the learned tangent.

The dual-head operator supplies u -> du/dt at the sensor nodes; rolling
a state forward is then ordinary ODE integration (Euler, RK4, or a
two-step Adams predictor-corrector). The reconstruction head supplies a
residual monitor: the elementwise squared gap between the running state
and its reconstruction, recorded for every stored state including the
initial one. The single-head baselines get direct-evaluation helpers.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import deeponet as dn
from .grids import Grid1D

SCHEMES = ("euler", "rk4", "abm2")


def euler_step(f, u, dt):
    return u + dt * f(u)


def rk4_step(f, u, dt):
    k1 = f(u)
    k2 = f(u + 0.5 * dt * k1)
    k3 = f(u + 0.5 * dt * k2)
    k4 = f(u + dt * k3)
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class RolloutTrace:
    """States and monitor output from one integration run.

    states has n_steps+1 rows (the initial state first); residuals and
    residual_mean align with it row for row. wall_s holds the per-step
    cost. A non-finite state truncates the trace, sets diverged, and
    records the 1-based step that failed; flagged marks residual-mean
    threshold crossings and never affects the integration itself.
    """

    scheme: str
    dt: float
    times: np.ndarray
    states: np.ndarray
    residuals: np.ndarray = None
    residual_mean: np.ndarray = None
    flagged: np.ndarray = None
    threshold: float = None
    diverged: bool = False
    failing_step: int = None
    wall_s: np.ndarray = None

    @property
    def n_states(self):
        return self.states.shape[0]

    @property
    def total_wall_s(self):
        return float(self.wall_s.sum()) if self.wall_s is not None else 0.0


def _monitor(u, recon_fn):
    r = u - recon_fn(u)
    return r * r


def integrate(tangent_fn, u0, dt, n_steps, scheme="rk4", recon_fn=None,
              residual_threshold=None):
    """March u0 forward n_steps of size dt under the given scheme.

    abm2 bootstraps its first step with RK4, then runs the two-step
    Adams-Bashforth predictor with a trapezoidal corrector. Residuals
    are recorded per state when recon_fn is given. A step that produces
    a non-finite state ends the run early with the trace truncated to
    the finite prefix.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme '{scheme}'; allowed: {list(SCHEMES)}")
    if n_steps < 0 or dt <= 0:
        raise ValueError("need n_steps >= 0 and dt > 0")
    u = np.asarray(u0, dtype=np.float64).copy()
    states = [u]
    residuals = [_monitor(u, recon_fn)] if recon_fn is not None else None
    walls = []
    diverged, failing = False, None
    f_prev = None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n_steps + 1):
            t0 = time.perf_counter()
            if scheme == "euler":
                u_next = euler_step(tangent_fn, u, dt)
            elif scheme == "rk4":
                u_next = rk4_step(tangent_fn, u, dt)
            else:
                f_n = tangent_fn(u)
                if f_prev is None:
                    u_next = rk4_step(tangent_fn, u, dt)
                else:
                    u_pred = u + dt * (1.5 * f_n - 0.5 * f_prev)
                    u_next = u + 0.5 * dt * (tangent_fn(u_pred) + f_n)
                f_prev = f_n
            walls.append(time.perf_counter() - t0)
            if not np.all(np.isfinite(u_next)):
                diverged, failing = True, k
                break
            u = u_next
            states.append(u)
            if residuals is not None:
                residuals.append(_monitor(u, recon_fn))
    states = np.stack(states)
    times = np.arange(states.shape[0]) * dt
    trace = RolloutTrace(
        scheme=scheme, dt=float(dt), times=times, states=states,
        diverged=diverged, failing_step=failing,
        wall_s=np.array(walls[: states.shape[0] - 1]),
    )
    if residuals is not None:
        trace.residuals = np.stack(residuals)
        axes = tuple(range(1, trace.residuals.ndim))
        trace.residual_mean = trace.residuals.mean(axis=axes)
        if residual_threshold is not None:
            trace.threshold = float(residual_threshold)
            trace.flagged = trace.residual_mean > trace.threshold
    return trace


def piti_infer(params, config, grid, u0, dt, n_steps, scheme="rk4",
               with_monitor=True, residual_threshold=None):
    """Convenience wrapper: build the fast closures and integrate."""
    tangent = dn.make_tangent_fn(params, config, grid)
    recon = dn.make_reconstruction_fn(params, config, grid) if with_monitor else None
    return integrate(tangent, u0, dt, n_steps, scheme=scheme, recon_fn=recon,
                     residual_threshold=residual_threshold)


# ---------------------------------------------------------------------------
# single-head baselines


def _spatial_nodes(grid):
    return grid.nodes[:, None] if isinstance(grid, Grid1D) else grid.nodes


def fr_infer(params, config, grid, u0, times):
    """Direct evaluation of the full-rollout operator at the given times.

    Times outside the training horizon are evaluated as-is; whether the
    answer is any good there is exactly what the benchmarks measure.
    """
    views = params.views()
    u0 = np.asarray(u0, dtype=np.float64)
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    spatial = _spatial_nodes(grid)
    coords = np.column_stack([
        np.repeat(times, len(spatial)),
        np.tile(spatial, (len(times), 1)),
    ])
    flat = u0.reshape(1, -1) if config.branch_type == "dense" else u0[None]
    u_hat, _ = dn.forward(views, config, flat, coords)
    return u_hat.reshape(len(times), *config.sensor_shape)


def ar_infer(params, config, grid, u0, n_steps, dt):
    """Self-composition of the one-step map evaluated at offset dt.

    Returns n_steps+1 states starting with u0 itself.
    """
    views = params.views()
    coords = np.column_stack([
        np.full(len(_spatial_nodes(grid)), float(dt)),
        _spatial_nodes(grid),
    ])
    tau = dn.trunk_net(views, config, coords)
    bias = float(views["head.bias_u"])
    s = config.output_scale
    u = np.asarray(u0, dtype=np.float64).copy()
    states = [u]
    for _ in range(n_steps):
        flat = u.reshape(1, -1) if config.branch_type == "dense" else u[None]
        b = dn.branch_net(views, config, flat)
        u = (s * (b @ tau.T + bias)).reshape(config.sensor_shape)
        states.append(u)
    return np.stack(states)


# ---------------------------------------------------------------------------
# trace persistence


def write_trace(trace, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "scheme": trace.scheme,
        "dt": trace.dt,
        "n_states": int(trace.n_states),
        "shape": list(trace.states.shape[1:]),
        "diverged": bool(trace.diverged),
        "failing_step": trace.failing_step,
        "threshold": trace.threshold,
        "has_residuals": trace.residuals is not None,
    }
    with open(path / "trace.json", "w") as f:
        json.dump(manifest, f, indent=1)
    trace.states.astype("<f8").tofile(path / "states.f64")
    trace.wall_s.astype("<f8").tofile(path / "wall_s.f64")
    if trace.residuals is not None:
        trace.residuals.astype("<f8").tofile(path / "residuals.f64")
    return path


def read_trace(path):
    path = Path(path)
    with open(path / "trace.json") as f:
        manifest = json.load(f)
    shape = tuple(manifest["shape"])
    n = manifest["n_states"]
    states = np.fromfile(path / "states.f64", dtype="<f8").reshape(n, *shape)
    wall = np.fromfile(path / "wall_s.f64", dtype="<f8")
    trace = RolloutTrace(
        scheme=manifest["scheme"], dt=manifest["dt"],
        times=np.arange(n) * manifest["dt"], states=states,
        diverged=manifest["diverged"], failing_step=manifest["failing_step"],
        wall_s=wall,
    )
    if manifest["has_residuals"]:
        trace.residuals = np.fromfile(path / "residuals.f64", dtype="<f8").reshape(n, *shape)
        axes = tuple(range(1, trace.residuals.ndim))
        trace.residual_mean = trace.residuals.mean(axis=axes)
        if manifest["threshold"] is not None:
            trace.threshold = manifest["threshold"]
            trace.flagged = trace.residual_mean > trace.threshold
    return trace
