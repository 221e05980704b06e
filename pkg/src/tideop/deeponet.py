"""Branch/trunk operator networks with an optional time-derivative head.

The model maps a sensed field u (branch input) and query coordinates
(trunk input) to a reconstruction u_hat and, in dual-output mode, a
predicted time derivative ut_hat. Dual output is realized by splitting
the branch and/or trunk latent vector in half, one half per head; each
head carries one trainable scalar bias.

All evaluation goes through the autodiff ops, so the same code path is
taped during training, runs plain numpy at inference, and propagates
coordinate jets for derivative losses.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .grids import Grid1D, Grid2D

CONV_CHANNELS = (2, 4)  # fixed stack: conv(k2 s2) -> pool -> conv -> pool


class CheckpointMismatchError(ValueError):
    """Stored checkpoint does not fit the requested configuration."""


@dataclass(frozen=True)
class NetConfig:
    """Architecture and input conventions for one operator network.

    branch_widths are the dense hidden layers (after the fixed conv
    stack when branch_type is conv2d); p is the latent size per head.
    phantom_time pins the trunk's time coordinate to 0 at sensor
    queries; special_form removes the time coordinate entirely and
    makes the derivative head the quantity entering the dynamics
    residual.

    branch_scale and output_scale express the field units: sensed
    inputs are divided by branch_scale before the branch net, and both
    heads are multiplied by output_scale after the dot product. The net
    itself then works near unit scale regardless of the data's physical
    magnitude. Both are fixed constants, not trainable.

    branch_whiten, when non-empty, replaces the raw sensor vector with
    its interior sine-mode coefficients divided elementwise by the given
    per-mode scales (typically the prior standard deviations, in raw
    field units, so it supersedes branch_scale). Fields whose spectra
    span several orders of magnitude then enter the branch with every
    informative mode at comparable size, instead of the small modes
    drowning below the large ones. Dense 1-D branches only; the tuple
    length must be n_sensors - 2 (the two end nodes are pinned and
    carry no information).

    trunk_coord_scale multiplies the first trunk layer's weights, which
    is the same as measuring coordinates in units of 1/scale. Values
    above 1 let the initial random features oscillate within the domain,
    so query functions with fine spatial structure are reachable without
    waiting for the first layer to grow.
    """

    branch_type: str
    branch_widths: tuple
    trunk_widths: tuple
    p: int
    sensor_shape: tuple
    dual_output: bool
    split_branch: bool = False
    split_trunk: bool = False
    phantom_time: bool = True
    special_form: bool = False
    activation: str = "tanh"
    branch_scale: float = 1.0
    output_scale: float = 1.0
    branch_whiten: tuple = ()
    trunk_coord_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "branch_widths", tuple(self.branch_widths))
        object.__setattr__(self, "trunk_widths", tuple(self.trunk_widths))
        object.__setattr__(self, "sensor_shape", tuple(self.sensor_shape))
        object.__setattr__(self, "branch_whiten", tuple(self.branch_whiten))
        if self.branch_type not in ("dense", "conv2d"):
            raise ValueError(f"unknown branch type '{self.branch_type}'")
        if self.activation != "tanh":
            raise ValueError("only tanh activation is supported")
        if self.dual_output and not (self.split_branch or self.split_trunk):
            raise ValueError("dual output requires splitting the branch or the trunk")
        if not self.dual_output and (self.split_branch or self.split_trunk):
            raise ValueError("split flags are only meaningful with dual output")
        if self.special_form and not self.dual_output:
            raise ValueError("the special form needs the derivative head")
        if self.branch_type == "conv2d":
            if len(self.sensor_shape) != 2 or self.sensor_shape != (16, 16):
                raise ValueError("conv2d branch expects a 16x16 sensor grid")
        elif len(self.sensor_shape) != 1:
            raise ValueError("dense branch expects a flat sensor vector")
        if self.branch_whiten:
            if self.branch_type != "dense" or len(self.sensor_shape) != 1:
                raise ValueError("branch whitening requires a dense 1-D branch")
            if len(self.branch_whiten) != self.sensor_shape[0] - 2:
                raise ValueError(
                    "branch_whiten needs one scale per interior sine mode "
                    f"({self.sensor_shape[0] - 2}), got {len(self.branch_whiten)}"
                )
            if min(self.branch_whiten) <= 0.0:
                raise ValueError("whitening scales must be strictly positive")
        if self.trunk_coord_scale <= 0.0:
            raise ValueError("trunk_coord_scale must be strictly positive")

    @property
    def spatial_dim(self):
        return len(self.sensor_shape)

    @property
    def n_sensors(self):
        return int(np.prod(self.sensor_shape))

    @property
    def trunk_in_dim(self):
        return self.spatial_dim + (0 if self.special_form else 1)

    @property
    def branch_out(self):
        return self.p * (2 if self.split_branch else 1)

    @property
    def trunk_out(self):
        return self.p * (2 if self.split_trunk else 1)

    def to_dict(self):
        return asdict(self)

    @staticmethod
    def from_dict(d):
        return NetConfig(**d)


def _dense_chain_shapes(prefix, dims):
    shapes = []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        shapes.append((f"{prefix}.w{i}", (a, b)))
        shapes.append((f"{prefix}.b{i}", (b,)))
    return shapes


def param_shapes(config):
    """Named tensor shapes in layout order: branch, trunk, head biases."""
    shapes = []
    if config.branch_type == "conv2d":
        in_ch = 1
        for i, out_ch in enumerate(CONV_CHANNELS):
            shapes.append((f"branch.conv{i}.w", (4 * in_ch, out_ch)))
            shapes.append((f"branch.conv{i}.b", (out_ch,)))
            in_ch = out_ch
        dense_in = CONV_CHANNELS[-1]
    elif config.branch_whiten:
        dense_in = config.n_sensors - 2
    else:
        dense_in = config.n_sensors
    shapes += _dense_chain_shapes("branch", [dense_in, *config.branch_widths, config.branch_out])
    shapes += _dense_chain_shapes(
        "trunk", [config.trunk_in_dim, *config.trunk_widths, config.trunk_out]
    )
    shapes.append(("head.bias_u", ()))
    if config.dual_output:
        shapes.append(("head.bias_ut", ()))
    return shapes


def init_params(config, seed):
    """Glorot-uniform weights, zero biases; deterministic in the seed."""
    layout = ad.ParamLayout.build(param_shapes(config))
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    data = np.zeros(layout.total)
    pv = ad.ParamVector(data, layout)
    for name, shape in zip(layout.names, layout.shapes):
        if not name.split(".")[-1].startswith("w"):
            continue  # biases stay zero and consume no randomness
        fan_in, fan_out = shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        pv.view(name)[...] = rng.uniform(-limit, limit, size=shape)
    return pv


def _n_dense_layers(config, part):
    widths = config.branch_widths if part == "branch" else config.trunk_widths
    return len(widths) + 1


def _affine(x, w, b):
    if isinstance(x, ad.Jet):
        return ad.jet_affine(x, w, b)
    return ad.add(ad.matmul(x, w), b)


def _activate(x):
    if isinstance(x, ad.Jet):
        return ad.jet_tanh(x)
    return ad.tanh(x)


def _dense_chain(views, prefix, n_layers, x):
    for i in range(n_layers):
        x = _affine(x, views[f"{prefix}.w{i}"], views[f"{prefix}.b{i}"])
        if i < n_layers - 1:
            x = _activate(x)
    return x


def _space_to_depth(x):
    """(B, 2m, 2n, C) -> (B, m, n, 4C): the k=2 s=2 valid patch layout."""
    b_dim = ad.value_of(x).shape[0] if isinstance(x, ad.Node) else x.shape[0]
    _, h, w, c = (ad.value_of(x) if isinstance(x, ad.Node) else x).shape
    x = ad.reshape(x, (b_dim, h // 2, 2, w // 2, 2, c))
    x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
    return ad.reshape(x, (b_dim, h // 2, w // 2, 4 * c))


def _avg_pool(x):
    shape = (ad.value_of(x) if isinstance(x, ad.Node) else x).shape
    b_dim, h, w, c = shape
    x = ad.reshape(x, (b_dim, h // 2, 2, w // 2, 2, c))
    return ad.mean(x, axis=(2, 4))


_WHITEN_MAPS = {}


def _whiten_map(n, whiten):
    """Interior-node sine analysis matrix with per-mode 1/scale folded in.

    Columns are modes m=1..n-2 sampled at nodes j=1..n-2, normalized so a
    unit-amplitude mode yields a unit coefficient before the scaling.
    """
    key = (n, whiten)
    if key not in _WHITEN_MAPS:
        j = np.arange(1, n - 1)
        m = np.arange(1, n - 1)
        basis = np.sin(np.pi * np.outer(j, m) / (n - 1)) * (2.0 / (n - 1))
        _WHITEN_MAPS[key] = basis / np.asarray(whiten)[None, :]
    return _WHITEN_MAPS[key]


def branch_net(views, config, u):
    """Branch features from raw sensed fields; applies the input scaling.

    Whitening supersedes the plain branch_scale division: its per-mode
    divisors are stated in raw field units, so branch_scale stays the
    declared unit of the data without acting on the input twice.
    """
    if config.branch_whiten:
        mat = _whiten_map(config.n_sensors, config.branch_whiten)
        if isinstance(u, ad.Node):
            u = ad.matmul(u[:, 1:-1], mat)
        else:
            u = u[:, 1:-1] @ mat
    elif config.branch_scale != 1.0:
        u = ad.mul(u, 1.0 / config.branch_scale)
    if config.branch_type == "conv2d":
        shape = (ad.value_of(u) if isinstance(u, ad.Node) else u).shape
        x = ad.reshape(u, (shape[0], 16, 16, 1))
        for i in range(len(CONV_CHANNELS)):
            x = _space_to_depth(x)
            x = _activate(_affine(x, views[f"branch.conv{i}.w"], views[f"branch.conv{i}.b"]))
            x = _avg_pool(x)
        x = ad.reshape(x, (shape[0], CONV_CHANNELS[-1]))
    else:
        x = u
    return _dense_chain(views, "branch", _n_dense_layers(config, "branch"), x)


def trunk_net(views, config, coords):
    """Trunk features at query coordinates; accepts a Jet for derivatives.

    The coordinate scale is folded into the first layer's weights, so
    jets keep differentiating with respect to the physical coordinates.
    """
    n = _n_dense_layers(config, "trunk")
    s = config.trunk_coord_scale
    if s == 1.0:
        return _dense_chain(views, "trunk", n, coords)
    x = _affine(coords, ad.mul(views["trunk.w0"], s), views["trunk.b0"])
    for i in range(1, n):
        x = _activate(x)
        x = _affine(x, views[f"trunk.w{i}"], views[f"trunk.b{i}"])
    return x


def combine(views, config, b, tau, with_bias=True):
    """Mix branch and trunk features into (u_hat, ut_hat or None).

    tau may be any trunk-output-shaped tensor (the value or one of its
    coordinate derivatives); head biases are added only for the value.
    """
    p = config.p
    s = config.output_scale
    if config.dual_output:
        bu = b[:, :p] if config.split_branch else b
        but = b[:, p:] if config.split_branch else b
        tu = tau[:, :p] if config.split_trunk else tau
        tut = tau[:, p:] if config.split_trunk else tau
        u_hat = ad.matmul(bu, ad.transpose(tu, (1, 0)))
        ut_hat = ad.matmul(but, ad.transpose(tut, (1, 0)))
        if with_bias:
            u_hat = ad.add(u_hat, views["head.bias_u"])
            ut_hat = ad.add(ut_hat, views["head.bias_ut"])
        if s != 1.0:
            u_hat = ad.mul(u_hat, s)
            ut_hat = ad.mul(ut_hat, s)
        return u_hat, ut_hat
    u_hat = ad.matmul(b, ad.transpose(tau, (1, 0)))
    if with_bias:
        u_hat = ad.add(u_hat, views["head.bias_u"])
    if s != 1.0:
        u_hat = ad.mul(u_hat, s)
    return u_hat, None


def forward(views, config, u, coords):
    """Full evaluation: (B, *sensor_shape) x (Q, trunk_in_dim) -> (B, Q) heads."""
    b = branch_net(views, config, u)
    tau = trunk_net(views, config, coords)
    return combine(views, config, b, tau)


def sensor_coords(grid, config):
    """Trunk coordinates of the sensor nodes, with the pinned time column."""
    if isinstance(grid, Grid1D):
        spatial = grid.nodes[:, None]
    else:
        spatial = grid.nodes
    if config.special_form:
        return spatial
    return np.column_stack([np.zeros(len(spatial)), spatial])


def tangent_operator(params, config, grid, states):
    """Predicted time derivative of each state, sampled at the sensors.

    states: (B, *sensor_shape) or a single unbatched state. Requires the
    dual-output head; single-output configurations cannot produce a
    time derivative at a pinned time.
    """
    if not config.dual_output:
        raise ad.CapabilityError("tangent evaluation needs the dual-output head")
    states = np.asarray(states, dtype=np.float64)
    single = states.shape == tuple(config.sensor_shape)
    if single:
        states = states[None]
    views = params.views() if isinstance(params, ad.ParamVector) else params
    flat = states.reshape(states.shape[0], -1) if config.branch_type == "dense" else states
    _, ut = forward(views, config, flat, sensor_coords(grid, config))
    out = ad.value_of(ut).reshape(states.shape[0], *config.sensor_shape)
    return out[0] if single else out


def make_tangent_fn(params, config, grid):
    """Fast closure u -> ut_hat with trunk features precomputed once."""
    if not config.dual_output:
        raise ad.CapabilityError("tangent evaluation needs the dual-output head")
    views = params.views()
    tau = trunk_net(views, config, sensor_coords(grid, config))
    p = config.p
    tut = tau[:, p:] if config.split_trunk else tau
    bias = float(views["head.bias_ut"])
    s = config.output_scale

    def fn(u):
        u = np.asarray(u, dtype=np.float64)
        single = u.shape == tuple(config.sensor_shape)
        batch = u[None] if single else u
        flat = batch.reshape(batch.shape[0], -1) if config.branch_type == "dense" else batch
        b = branch_net(views, config, flat)
        but = b[:, p:] if config.split_branch else b
        out = (s * (but @ tut.T + bias)).reshape(batch.shape[0], *config.sensor_shape)
        return out[0] if single else out

    return fn


def make_reconstruction_fn(params, config, grid):
    """Fast closure u -> u_hat at the sensors (the residual monitor input)."""
    views = params.views()
    tau = trunk_net(views, config, sensor_coords(grid, config))
    p = config.p
    tu = tau[:, :p] if config.split_trunk and config.dual_output else tau
    bias = float(views["head.bias_u"])
    s = config.output_scale

    def fn(u):
        u = np.asarray(u, dtype=np.float64)
        single = u.shape == tuple(config.sensor_shape)
        batch = u[None] if single else u
        flat = batch.reshape(batch.shape[0], -1) if config.branch_type == "dense" else batch
        b = branch_net(views, config, flat)
        bu = b[:, :p] if config.split_branch and config.dual_output else b
        out = (s * (bu @ tu.T + bias)).reshape(batch.shape[0], *config.sensor_shape)
        return out[0] if single else out

    return fn


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, config, params, seed, step):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": config.to_dict(),
        "layout": params.layout.to_manifest(),
        "seed": int(seed),
        "step": int(step),
    }
    with open(path / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)
    params.data.astype("<f8").tofile(path / "params.f64")
    return path


def load_checkpoint(path):
    """Returns (config, params, seed, step); validates sizes against layout."""
    path = Path(path)
    with open(path / "manifest.json") as f:
        manifest = json.load(f)
    config = NetConfig.from_dict(manifest["config"])
    layout = ad.ParamLayout.build(
        [(e["name"], tuple(e["shape"])) for e in manifest["layout"]]
    )
    expected = ad.ParamLayout.build(param_shapes(config))
    if layout.names != expected.names or layout.shapes != expected.shapes:
        raise CheckpointMismatchError(f"layout in {path} does not match its config")
    data = np.fromfile(path / "params.f64", dtype="<f8")
    if data.size != layout.total:
        raise CheckpointMismatchError(
            f"{path / 'params.f64'} holds {data.size} values, layout needs {layout.total}"
        )
    return config, ad.ParamVector(data, layout), manifest["seed"], manifest["step"]
