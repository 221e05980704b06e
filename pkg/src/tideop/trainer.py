"""Training loop: per-style batch assembly, Adam updates, history, validation.

Four training styles share one loop. "piti" and "piti_special" fit the
dual-head operator on state profiles sampled at fixed slice times;
"fr" fits a single-head operator on initial conditions with random
space-time collocation up to a horizon; "ar" fits a single-head
one-step map on slice profiles with collocation inside [0, dt].

One epoch is one optimizer step. Every step appends a history row; a
fixed number of evenly spaced steps also run validation. A non-finite
loss or gradient aborts training and keeps the parameters from before
the failing step.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import deeponet as dn
from . import losses as ls
from .deeponet import CheckpointMismatchError
from .evaluate import rel_l2
from .grids import EQUATIONS, Grid1D

TRAIN_MODES = ("piti", "piti_special", "fr", "ar")

HISTORY_COLUMNS = ("step", "lr", "total", "pde", "recon", "bc", "cons",
                   "data_u", "data_ut", "val_rel_l2_u", "val_rel_l2_ut", "wall_s")

# boundary probe times drawn per iteration for the meshfree styles
N_BC_TIMES = 8


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs besides the dataset itself.

    Trajectories in the train container are used by index range:
    [0, n_physics) drive the physics terms, the next n_data drive the
    supervised terms, and the remainder is held out for validation.
    """

    mode: str
    equation: str
    net: dn.NetConfig
    weights: ls.LossWeights
    epochs: int
    n_physics: int
    n_data: int = 0
    batch_size: int = 128
    n_collocation: int = 128
    lr_base: float = 1e-3
    lr_rate: float = 0.9
    lr_decay_steps: int = 2000
    seed: int = 0
    physics_slice_times: tuple = (0.0,)
    slice_times: tuple = (0.0, 0.25, 0.5)
    fr_t_max: float = 0.5
    ar_dt: float = 0.01
    n_val_events: int = 100

    def __post_init__(self):
        object.__setattr__(self, "slice_times", tuple(float(t) for t in self.slice_times))
        object.__setattr__(
            self, "physics_slice_times", tuple(float(t) for t in self.physics_slice_times)
        )
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"unknown training mode '{self.mode}'; allowed: {list(TRAIN_MODES)}")
        if self.equation not in EQUATIONS:
            raise ValueError(f"unknown equation '{self.equation}'; allowed: {list(EQUATIONS)}")
        if self.epochs < 0 or self.n_physics < 1 or self.n_data < 0:
            raise ValueError("epochs must be >= 0, n_physics >= 1, n_data >= 0")
        if self.batch_size < 1 or self.n_collocation < 1 or self.n_val_events < 1:
            raise ValueError("batch_size, n_collocation and n_val_events must be positive")
        if self.fr_t_max <= 0 or self.ar_dt <= 0:
            raise ValueError("fr_t_max and ar_dt must be positive")
        for name in ("slice_times", "physics_slice_times"):
            ts = getattr(self, name)
            if not ts or any(t < 0 for t in ts):
                raise ValueError(f"{name} must be non-empty and non-negative")
            if any(nxt <= cur for nxt, cur in zip(ts[1:], ts)):
                raise ValueError(f"{name} must be strictly increasing")
        if self.mode in ("piti", "piti_special"):
            if not self.net.dual_output:
                raise ValueError(f"mode '{self.mode}' needs a dual-output network")
            want_special = self.mode == "piti_special"
            if self.net.special_form != want_special or self.weights.special_form != want_special:
                raise ValueError(
                    f"mode '{self.mode}' requires special_form={want_special} "
                    "on both the network and the loss weights"
                )
        else:
            if self.net.dual_output or self.net.special_form or self.weights.special_form:
                raise ValueError(f"mode '{self.mode}' uses a single-output network")
        if (self.weights.data_u != 0 or self.weights.data_ut != 0) and self.n_data < 1:
            raise ValueError("supervised loss weights need n_data >= 1")
        if all(getattr(self.weights, n) == 0.0 for n in ls.TERM_NAMES):
            raise ValueError("all loss weights are zero; nothing to train")

    def to_dict(self):
        d = asdict(self)
        d["net"] = self.net.to_dict()
        d["weights"] = asdict(self.weights)
        d["slice_times"] = list(self.slice_times)
        d["physics_slice_times"] = list(self.physics_slice_times)
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        d["net"] = dn.NetConfig.from_dict(d["net"])
        d["weights"] = ls.LossWeights(**d["weights"])
        d["slice_times"] = tuple(d["slice_times"])
        if "physics_slice_times" in d:
            d["physics_slice_times"] = tuple(d["physics_slice_times"])
        return TrainConfig(**d)


@dataclass(frozen=True)
class AccessLog:
    """Snapshot times actually read from each trajectory role."""

    physics: tuple
    data: tuple
    validation: tuple


@dataclass
class TrainData:
    """Arrays staged out of the dataset before the loop starts.

    phys_in holds branch inputs in native sensor shape (flat for dense
    branches); *_target arrays are always flattened to (n, n_sensors).
    The remaining fields are populated per mode and left None elsewhere.
    """

    phys_in: np.ndarray
    phys_target: np.ndarray
    access: AccessLog
    data_in: np.ndarray = None
    data_target_u: np.ndarray = None
    data_target_ut: np.ndarray = None
    data_fields: np.ndarray = None
    data_times: np.ndarray = None
    val_in: np.ndarray = None
    val_target_u: np.ndarray = None
    val_target_ut: np.ndarray = None
    val_fields: np.ndarray = None
    val_times: np.ndarray = None
    val_next: np.ndarray = None


@dataclass
class TrainResult:
    config: TrainConfig
    params: ad.ParamVector
    opt_state: ad.OptimizerState
    history: list
    access: AccessLog
    aborted: bool = False
    failing_step: int = None


# ---------------------------------------------------------------------------
# dataset staging


def _branch_shape(states, config):
    """Stack snapshots into the branch input layout for this net."""
    x = np.stack(states)
    if config.branch_type == "dense":
        return x.reshape(x.shape[0], -1)
    return x


def _flat(states):
    x = np.stack(states)
    return x.reshape(x.shape[0], -1)


def _snapshot_at(traj, t, mode):
    idx = np.flatnonzero(np.isclose(traj.times, t, rtol=0.0, atol=1e-9))
    if len(idx) == 0:
        raise KeyError(
            f"{mode} training needs a stored snapshot at t={t}; the trajectory "
            f"holds {len(traj.times)} times in [{traj.times[0]}, {traj.times[-1]}]"
        )
    return traj.snapshot(int(idx[0]))


def prepare(config, dataset):
    """Slice the train container into per-role arrays, logging every
    snapshot time that gets read."""
    if dataset.equation != config.equation:
        raise ValueError(
            f"dataset holds '{dataset.equation}' but the config trains '{config.equation}'"
        )
    if dataset.split != "train":
        raise ValueError(f"training reads the 'train' split, got '{dataset.split}'")
    if dataset.branch_scale != config.net.branch_scale:
        raise ValueError(
            f"dataset branch_scale {dataset.branch_scale} does not match "
            f"network branch_scale {config.net.branch_scale}"
        )
    n = dataset.n_trajectories
    if config.n_physics + config.n_data > n:
        raise ValueError(
            f"roles need {config.n_physics}+{config.n_data} trajectories, "
            f"container holds {n}"
        )
    phys = dataset.trajectories[: config.n_physics]
    data = dataset.trajectories[config.n_physics : config.n_physics + config.n_data]
    val = dataset.trajectories[config.n_physics + config.n_data :]
    logs = {"physics": set(), "data": set(), "validation": set()}

    def grab(traj, t, role):
        logs[role].add(float(t))
        return _snapshot_at(traj, t, config.mode)

    net = config.net

    # The physics pool feeds the unsupervised terms in every style. It
    # holds the physics-role trajectories at physics_slice_times; when a
    # data role exists, its slice profiles join the pool as well (they
    # are valid states of an autonomous system, so each one doubles as a
    # shifted initial condition).
    pool = [grab(tr, t, "physics") for tr in phys for t in config.physics_slice_times]
    if config.n_data:
        pool += [grab(tr, t, "data") for tr in data for t in config.slice_times]
    phys_in = _branch_shape([s.u for s in pool], net)
    phys_target = _flat([s.u for s in pool])

    kw = {}
    if config.mode in ("piti", "piti_special"):
        if config.n_data:
            ds = [grab(tr, t, "data") for tr in data for t in config.slice_times]
            kw["data_in"] = _branch_shape([s.u for s in ds], net)
            kw["data_target_u"] = _flat([s.u for s in ds])
            kw["data_target_ut"] = _flat([s.u_t for s in ds])
        if val:
            vs = [st for tr in val for st in _all_snapshots(tr, logs)]
            kw["val_in"] = _branch_shape([s.u for s in vs], net)
            kw["val_target_u"] = _flat([s.u for s in vs])
            kw["val_target_ut"] = _flat([s.u_t for s in vs])
    elif config.mode == "fr":
        if config.n_data:
            times = [t for t in config.slice_times if t <= config.fr_t_max + 1e-9]
            kw["data_in"] = _branch_shape([grab(tr, 0.0, "data").u for tr in data], net)
            kw["data_fields"] = np.stack(
                [_flat([grab(tr, t, "data").u for t in times]) for tr in data]
            )
            kw["data_times"] = np.asarray(times, dtype=np.float64)
        if val:
            for tr in val:
                _all_snapshots(tr, logs)
            kw["val_in"] = _branch_shape([grab(tr, 0.0, "validation").u for tr in val], net)
            kw["val_fields"] = np.stack([tr.u.reshape(len(tr.times), -1) for tr in val])
            kw["val_times"] = np.asarray(val[0].times, dtype=np.float64)
    else:  # ar
        if config.n_data:
            din, dnext = [], []
            for tr in data:
                for t in config.slice_times:
                    din.append(grab(tr, t, "data").u)
                    dnext.append(grab(tr, t + config.ar_dt, "data").u)
            kw["data_in"] = _branch_shape(din, net)
            kw["data_target_u"] = _flat(dnext)
        if val:
            kw.update(_ar_validation(config, val, net, logs))
    access = AccessLog(*(tuple(sorted(logs[r])) for r in ("physics", "data", "validation")))
    return TrainData(phys_in=phys_in, phys_target=phys_target, access=access, **kw)


def _all_snapshots(traj, logs):
    for t in traj.times:
        logs["validation"].add(float(t))
    return [traj.snapshot(i) for i in range(len(traj.times))]


def _ar_validation(config, val, net, logs):
    """One-step validation pairs for the autoregressive style.

    Restricted to slice-time states and their +ar_dt successors so the
    access log stays inside the set this style is allowed to touch, and
    degrades to a reconstruction-only anchor when no successor is stored.
    """
    kw = {}
    have_next = all(
        np.any(np.isclose(tr.times, t + config.ar_dt, rtol=0.0, atol=1e-9))
        for tr in val for t in config.slice_times
    )
    vin, vtgt = [], []
    for tr in val:
        for t in config.slice_times:
            vin.append(_snapshot_at(tr, t, config.mode).u)
            logs["validation"].add(float(t))
            if have_next:
                vtgt.append(_snapshot_at(tr, t + config.ar_dt, config.mode).u)
                logs["validation"].add(float(t + config.ar_dt))
    kw["val_in"] = _branch_shape(vin, net)
    kw["val_target_u"] = _flat(vin)
    if have_next:
        kw["val_next"] = _flat(vtgt)
    return kw


# ---------------------------------------------------------------------------
# per-style loss terms


def _pde_plan(equation, config):
    """Jet multi-indices over the trunk input plus the residual field map.

    Sources: ("value",) is the reconstruction head, ("ut",) the
    derivative head, ("jet", mi) a trunk-input derivative of the
    reconstruction head.
    """
    x0 = 0 if config.special_form else 1
    wanted, fields = [], {}
    if config.special_form:
        fields["u_t"] = ("ut",)
    else:
        wanted.append((0,))
        fields["u_t"] = ("jet", (0,))
    if equation == "heat1d":
        wanted.append((x0, x0))
        fields["u_xx"] = ("jet", (x0, x0))
    elif equation == "burgers1d":
        wanted += [(x0,), (x0, x0)]
        fields["u"] = ("value",)
        fields["u_x"] = ("jet", (x0,))
        fields["u_xx"] = ("jet", (x0, x0))
    elif equation == "allencahn2d":
        y0 = x0 + 1
        wanted += [(x0, x0), (y0, y0)]
        fields["u"] = ("value",)
        fields["u_xx"] = ("jet", (x0, x0))
        fields["u_yy"] = ("jet", (y0, y0))
    else:
        raise ValueError(f"unknown equation '{equation}'")
    return wanted, fields


def _heads_and_fields(leaves, net, b, out, plan):
    u_hat, ut_hat = dn.combine(leaves, net, b, out[()])
    cache = {}
    fields = {}
    for name, src in plan.items():
        if src[0] == "ut":
            fields[name] = ut_hat
        elif src[0] == "value":
            fields[name] = u_hat
        else:
            mi = src[1]
            if mi not in cache:
                cache[mi] = dn.combine(leaves, net, b, out[mi], with_bias=False)[0]
            fields[name] = cache[mi]
    return u_hat, ut_hat, fields


def _piti_terms(leaves, config, grid, coords, wanted, plan, batch):
    net, w = config.net, config.weights
    b = dn.branch_net(leaves, net, batch["x"])
    need_jets = w.pde != 0 or w.cons != 0
    if need_jets:
        out = ad.input_jet(lambda j: dn.trunk_net(leaves, net, j), coords, wanted)
    else:
        out = {(): dn.trunk_net(leaves, net, coords)}
    u_hat, ut_hat, fields = _heads_and_fields(leaves, net, b, out, plan if need_jets else {})
    terms = {}
    if w.pde != 0:
        terms["pde"] = ls.pde_loss(config.equation, fields)
    if w.recon != 0:
        terms["recon"] = ls.reconstruction_loss(u_hat, batch["target"])
    if w.bc != 0:
        terms["bc"] = ls.boundary_loss(config.equation, leaves, net, grid, b)
    if w.cons != 0:
        terms["cons"] = ls.consistency_loss(fields["u_t"], ut_hat, net.special_form)
    if w.data_u != 0 or w.data_ut != 0:
        bd = dn.branch_net(leaves, net, batch["dx"])
        ud, utd = dn.combine(leaves, net, bd, out[()])
        terms.update(ls.data_losses(
            u_hat=ud, ut_hat=utd,
            u_star=batch["du"] if w.data_u != 0 else None,
            ut_star=batch["dut"] if w.data_ut != 0 else None,
        ))
    return terms


def _meshfree_terms(leaves, config, grid, coords0, wanted, plan, batch):
    """Shared step for the fr and ar styles: random collocation for the
    dynamics, the sensor grid at the window start for the anchor."""
    net, w = config.net, config.weights
    b = dn.branch_net(leaves, net, batch["x"])
    terms = {}
    if w.pde != 0:
        out = ad.input_jet(lambda j: dn.trunk_net(leaves, net, j), batch["colloc"], wanted)
        _, _, fields = _heads_and_fields(leaves, net, b, out, plan)
        terms["pde"] = ls.pde_loss(config.equation, fields)
    if w.recon != 0:
        tau0 = dn.trunk_net(leaves, net, coords0)
        u0 = dn.combine(leaves, net, b, tau0)[0]
        terms["recon"] = ls.reconstruction_loss(u0, batch["target"])
    if w.bc != 0:
        terms["bc"] = ls.boundary_loss(
            config.equation, leaves, net, grid, b, t_vals=batch["colloc"][:N_BC_TIMES, 0]
        )
    if w.data_u != 0:
        bd = dn.branch_net(leaves, net, batch["dx"])
        taud = dn.trunk_net(leaves, net, batch["dcoords"])
        ud = dn.combine(leaves, net, bd, taud)[0]
        terms["data_u"] = ls.data_losses(u_hat=ud, u_star=batch["du"])["data_u"]
    if w.data_ut != 0:
        raise ad.CapabilityError("single-output styles have no derivative head to supervise")
    return terms


def _with_time_column(t, spatial):
    return np.column_stack([np.full(len(spatial), float(t)), spatial])


def _spatial_nodes(grid):
    return grid.nodes[:, None] if isinstance(grid, Grid1D) else grid.nodes


def _draw_batch(rng, config, data, grid):
    """All randomness for one step, in a fixed draw order."""
    w = config.weights
    batch = {}
    idx = rng.integers(0, len(data.phys_in), size=config.batch_size)
    batch["x"] = data.phys_in[idx]
    batch["target"] = data.phys_target[idx]
    if config.mode in ("piti", "piti_special"):
        if w.data_u != 0 or w.data_ut != 0:
            di = rng.integers(0, len(data.data_in), size=config.batch_size)
            batch["dx"] = data.data_in[di]
            batch["du"] = data.data_target_u[di]
            batch["dut"] = data.data_target_ut[di]
        return batch
    if w.data_u != 0:
        di = rng.integers(0, len(data.data_in), size=config.batch_size)
        batch["dx"] = data.data_in[di]
        if config.mode == "fr":
            ti = int(rng.integers(0, len(data.data_times)))
            batch["du"] = data.data_fields[di, ti]
            batch["dcoords"] = _with_time_column(data.data_times[ti], _spatial_nodes(grid))
        else:
            batch["du"] = data.data_target_u[di]
            batch["dcoords"] = _with_time_column(config.ar_dt, _spatial_nodes(grid))
    t_max = config.fr_t_max if config.mode == "fr" else config.ar_dt
    batch["colloc"] = ls.fr_collocation(
        rng, config.n_collocation, config.net.spatial_dim, t_max=t_max
    )
    return batch


# ---------------------------------------------------------------------------
# validation


def validate(params, config, grid, data):
    """Mean relative L2 over the held-out role; (u metric, ut metric).

    The derivative metric exists only for the dual-head styles; the
    others report None. With no held-out trajectories both are None.
    """
    if data.val_in is None:
        return None, None
    views = params.views()
    net = config.net
    if config.mode in ("piti", "piti_special"):
        u_hat, ut_hat = dn.forward(views, net, data.val_in, dn.sensor_coords(grid, net))
        ru = np.mean([rel_l2(u_hat[i], data.val_target_u[i]) for i in range(len(u_hat))])
        rt = np.mean([rel_l2(ut_hat[i], data.val_target_ut[i]) for i in range(len(ut_hat))])
        return float(ru), float(rt)
    if config.mode == "fr":
        spatial = _spatial_nodes(grid)
        times = data.val_times
        coords = np.column_stack([
            np.repeat(times, len(spatial)),
            np.tile(spatial, (len(times), 1)),
        ])
        u_hat, _ = dn.forward(views, net, data.val_in, coords)
        u_hat = u_hat.reshape(len(u_hat), len(times), -1)
        ru = np.mean([
            rel_l2(u_hat[i, j], data.val_fields[i, j])
            for i in range(u_hat.shape[0]) for j in range(len(times))
        ])
        return float(ru), None
    t = config.ar_dt if data.val_next is not None else 0.0
    target = data.val_next if data.val_next is not None else data.val_target_u
    coords = _with_time_column(t, _spatial_nodes(grid))
    u_hat, _ = dn.forward(views, net, data.val_in, coords)
    ru = np.mean([rel_l2(u_hat[i], target[i]) for i in range(len(u_hat))])
    return float(ru), None


# ---------------------------------------------------------------------------
# the loop


def train(config, dataset, out_dir=None):
    """Run the configured number of optimizer steps; returns TrainResult.

    When out_dir is given, writes history.csv plus a model checkpoint
    (the inference artifact) and a full training-state checkpoint. On a
    non-finite loss or gradient the loop stops and the parameters from
    before the failing step are what gets saved.
    """
    data = prepare(config, dataset)
    net, w = config.net, config.weights
    grid = dataset.grid
    params = dn.init_params(net, config.seed)
    opt = ad.OptimizerState.fresh(
        params.layout.total, config.lr_base, config.lr_rate, config.lr_decay_steps
    )
    rng = np.random.Generator(np.random.Philox(key=(config.seed << 32) + 1))
    wanted, plan = _pde_plan(config.equation, net)
    coords0 = dn.sensor_coords(grid, net)
    val_every = max(1, config.epochs // config.n_val_events)
    rows = []
    aborted, failing = False, None
    t0 = time.perf_counter()
    for k in range(1, config.epochs + 1):
        batch = _draw_batch(rng, config, data, grid)
        cell = {}

        def loss_eval(leaves):
            if config.mode in ("piti", "piti_special"):
                terms = _piti_terms(leaves, config, grid, coords0, wanted, plan, batch)
            else:
                terms = _meshfree_terms(leaves, config, grid, coords0, wanted, plan, batch)
            cell["bd"] = ls.make_breakdown(w, terms)
            return ls.total_loss(w, terms)

        lr = ad.lr_at(opt.step, config.lr_base, config.lr_rate, config.lr_decay_steps)
        try:
            _, grad = ad.grad_params(loss_eval, params)
            params_next, opt = ad.adam_step(opt, params, grad)
        except ad.GradientError:
            aborted, failing = True, k
            break
        params = params_next
        bd = cell["bd"]
        row = {c: None for c in HISTORY_COLUMNS}
        row.update(step=k, lr=lr, total=bd.total, pde=bd.pde, recon=bd.recon,
                   bc=bd.bc, cons=bd.cons, data_u=bd.data_u, data_ut=bd.data_ut)
        if k % val_every == 0 or k == config.epochs:
            vu, vt = validate(params, config, grid, data)
            row["val_rel_l2_u"], row["val_rel_l2_ut"] = vu, vt
        row["wall_s"] = time.perf_counter() - t0
        rows.append(row)
    result = TrainResult(config, params, opt, rows, data.access, aborted, failing)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_history(rows, out_dir / "history.csv")
        dn.save_checkpoint(out_dir / "model", net, params, config.seed, opt.step)
        save_training_state(out_dir / "state", config, params, opt)
    return result


def write_history(rows, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HISTORY_COLUMNS)
        for row in rows:
            out = []
            for c in HISTORY_COLUMNS:
                v = row[c]
                if v is None:
                    out.append("")
                elif c == "step":
                    out.append(str(int(v)))
                else:
                    out.append(repr(float(v)))
            writer.writerow(out)
    return path


def read_history(path):
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames) != HISTORY_COLUMNS:
            raise ValueError(f"unexpected history columns in {path}")
        for rec in reader:
            row = {}
            for c in HISTORY_COLUMNS:
                if rec[c] == "":
                    row[c] = None
                elif c == "step":
                    row[c] = int(rec[c])
                else:
                    row[c] = float(rec[c])
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# training-state checkpoints


def save_training_state(path, config, params, opt):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "train_config": config.to_dict(),
        "layout": params.layout.to_manifest(),
        "step": int(opt.step),
    }
    with open(path / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)
    params.data.astype("<f8").tofile(path / "params.f64")
    opt.m.astype("<f8").tofile(path / "adam_m.f64")
    opt.v.astype("<f8").tofile(path / "adam_v.f64")
    return path


def load_training_state(path, expect_config=None):
    """Returns (TrainConfig, ParamVector, OptimizerState); rejects a
    state whose configuration differs from the expected one."""
    path = Path(path)
    with open(path / "manifest.json") as f:
        manifest = json.load(f)
    config = TrainConfig.from_dict(manifest["train_config"])
    if expect_config is not None:
        same = json.dumps(config.to_dict(), sort_keys=True) == json.dumps(
            expect_config.to_dict(), sort_keys=True
        )
        if not same:
            raise CheckpointMismatchError(
                f"training state in {path} was produced by a different configuration"
            )
    layout = ad.ParamLayout.build(dn.param_shapes(config.net))
    arrays = {}
    for name in ("params", "adam_m", "adam_v"):
        data = np.fromfile(path / f"{name}.f64", dtype="<f8")
        if data.size != layout.total:
            raise CheckpointMismatchError(
                f"{path / (name + '.f64')} holds {data.size} values, layout needs {layout.total}"
            )
        arrays[name] = data
    params = ad.ParamVector(arrays["params"], layout)
    opt = ad.OptimizerState(
        arrays["adam_m"], arrays["adam_v"], int(manifest["step"]),
        config.lr_base, config.lr_rate, config.lr_decay_steps,
    )
    return config, params, opt
