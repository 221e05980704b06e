"""Training-loss pieces: dynamics residual, boundary/seam penalties, data fits.

The pieces are pure: each returns an unweighted scalar (a Node when
parameters are taped). `total_loss` applies the weights, skipping
zero-weight terms entirely so that disabling a term cannot perturb the
remaining graph in any way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import deeponet as dn
from .grids import Grid1D
from .solvers import AC_EPS, BURGERS_NU, HEAT_ALPHA

TERM_NAMES = ("pde", "recon", "bc", "cons", "data_u", "data_ut")


class ContractError(RuntimeError):
    """An operation was requested in a mode where it is undefined."""


@dataclass(frozen=True)
class LossWeights:
    """Term weights; the consistency weight is forced to zero in the
    special form, where the derivative head itself enters the residual
    and there is no separate time derivative to tie it to."""

    pde: float = 0.0
    recon: float = 0.0
    bc: float = 0.0
    cons: float = 0.0
    data_u: float = 0.0
    data_ut: float = 0.0
    special_form: bool = False

    def __post_init__(self):
        if self.special_form and self.cons != 0.0:
            object.__setattr__(self, "cons", 0.0)

    def as_dict(self):
        return {k: getattr(self, k) for k in TERM_NAMES}


@dataclass(frozen=True)
class LossBreakdown:
    """Raw term values plus their weighted total, as plain floats."""

    pde: float = 0.0
    recon: float = 0.0
    bc: float = 0.0
    cons: float = 0.0
    data_u: float = 0.0
    data_ut: float = 0.0
    total: float = 0.0


def total_loss(weights, terms):
    """Weighted sum over the supplied terms.

    Zero-weight terms are skipped (the term need not be present at
    all); a nonzero weight without a matching term is an error. Returns
    a Node when any contributing term is a Node.
    """
    total = None
    for name in TERM_NAMES:
        w = getattr(weights, name)
        if w == 0.0:
            continue
        if name not in terms or terms[name] is None:
            raise KeyError(f"loss term '{name}' has weight {w} but was not computed")
        piece = ad.mul(terms[name], w)
        total = piece if total is None else ad.add(total, piece)
    if total is None:
        raise ValueError("all loss weights are zero")
    return total


def make_breakdown(weights, terms):
    """Float snapshot of the terms and the same weighted total."""
    vals = {k: float(ad.value_of(terms[k])) if k in terms and terms[k] is not None else 0.0
            for k in TERM_NAMES}
    total = float(ad.value_of(total_loss(weights, {k: vals[k] for k in TERM_NAMES})))
    return LossBreakdown(total=total, **vals)


# ---------------------------------------------------------------------------
# dynamics residual


def pde_residual(equation, fields):
    """Pointwise residual of the governing equation.

    fields maps derivative names to head outputs evaluated at the
    collocation points: always "u_t" (which is the derivative head in
    the special form, the time derivative of the reconstruction head
    otherwise) plus the spatial derivatives the equation needs.
    """
    u_t = fields["u_t"]
    if equation == "heat1d":
        return ad.sub(u_t, ad.mul(fields["u_xx"], HEAT_ALPHA))
    if equation == "burgers1d":
        rhs = ad.sub(ad.mul(fields["u_xx"], BURGERS_NU), ad.mul(fields["u"], fields["u_x"]))
        return ad.sub(u_t, rhs)
    if equation == "allencahn2d":
        u = fields["u"]
        lap = ad.add(fields["u_xx"], fields["u_yy"])
        rhs = ad.sub(ad.mul(lap, AC_EPS**2), ad.sub(ad.mul(ad.square(u), u), u))
        return ad.sub(u_t, rhs)
    raise ValueError(f"unknown equation '{equation}'")


def pde_loss(equation, fields):
    return ad.mean(ad.square(pde_residual(equation, fields)))


# ---------------------------------------------------------------------------
# boundary and seam penalties


def _head_values(views, config, b, coords, with_bias=True):
    tau = dn.trunk_net(views, config, coords)
    u_hat, _ = dn.combine(views, config, b, tau, with_bias=with_bias)
    return u_hat


def _with_time(coords_spatial, t_vals, config):
    """Cartesian product of probe times and spatial points -> trunk coords.

    Spatial-major ordering: all probe times for the first point come
    first, so seam halves stay aligned across the column split.
    """
    t_vals = np.atleast_1d(np.asarray(t_vals, dtype=np.float64))
    pts = np.atleast_2d(np.asarray(coords_spatial, dtype=np.float64))
    if config.special_form:
        return pts
    rep_t = np.tile(t_vals, len(pts))
    rep_x = np.repeat(pts, len(t_vals), axis=0)
    return np.column_stack([rep_t, rep_x])


def boundary_loss(equation, views, config, grid, b, t_vals=(0.0,)):
    """Penalty tying the reconstruction head to the boundary conditions.

    heat1d: squared values at both Dirichlet walls. burgers1d: squared
    seam mismatch of value and first derivative between x=0 and x=1.
    allencahn2d: squared value seam mismatch across both axes.
    """
    if equation == "heat1d":
        walls = _with_time(np.array([[0.0], [1.0]]), t_vals, config)
        u_hat = _head_values(views, config, b, walls)
        return ad.mean(ad.square(u_hat))
    if equation == "burgers1d":
        seam = _with_time(np.array([[0.0], [1.0]]), t_vals, config)
        x_col = seam.shape[1] - 1

        def trunk_jet(j):
            return dn.trunk_net(views, config, j)

        out = ad.input_jet(trunk_jet, seam, [(x_col,)])
        u_hat, _ = dn.combine(views, config, b, out[()])
        ux_hat, _ = dn.combine(views, config, b, out[(x_col,)], with_bias=False)
        n = u_hat.shape[1] // 2
        dv = ad.sub(u_hat[:, :n], u_hat[:, n:])
        dd = ad.sub(ux_hat[:, :n], ux_hat[:, n:])
        return ad.mul(ad.add(ad.mean(ad.square(dv)), ad.mean(ad.square(dd))), 0.5)
    if equation == "allencahn2d":
        y = grid.y_axis.nodes
        x = grid.x_axis.nodes
        seam_x = np.vstack([np.column_stack([np.zeros_like(y), y]),
                            np.column_stack([np.ones_like(y), y])])
        seam_y = np.vstack([np.column_stack([x, np.zeros_like(x)]),
                            np.column_stack([x, np.ones_like(x)])])
        losses = []
        for seam in (seam_x, seam_y):
            coords = _with_time(seam, t_vals, config)
            u_hat = _head_values(views, config, b, coords)
            n = u_hat.shape[1] // 2
            d = ad.sub(u_hat[:, :n], u_hat[:, n:])
            losses.append(ad.mean(ad.square(d)))
        return ad.mul(ad.add(losses[0], losses[1]), 0.5)
    raise ValueError(f"unknown equation '{equation}'")


# ---------------------------------------------------------------------------
# data-fit pieces


def reconstruction_loss(u_hat, u_ref):
    """Mean squared mismatch between the reconstruction head and the
    profile that was fed to the branch."""
    return ad.mse(u_hat, u_ref)


def consistency_loss(u_hat_t, ut_hat, special_form=False):
    """Ties the time derivative of the reconstruction head to the
    derivative head. Undefined in the special form."""
    if special_form:
        raise ContractError("consistency is undefined in the special form: "
                            "the derivative head is the only time derivative")
    return ad.mse(u_hat_t, ut_hat)


def data_losses(u_hat=None, ut_hat=None, u_star=None, ut_star=None):
    """Supervised fits against stored solver fields.

    Returns {"data_u": ..., "data_ut": ...} with entries only for the
    pairs that were supplied.
    """
    out = {}
    if u_star is not None:
        if u_hat is None:
            raise ValueError("u_star given without a prediction")
        out["data_u"] = ad.mse(u_hat, u_star)
    if ut_star is not None:
        if ut_hat is None:
            raise ValueError("ut_star given without a derivative prediction")
        out["data_ut"] = ad.mse(ut_hat, ut_star)
    return out


# ---------------------------------------------------------------------------
# collocation point policies


def piti_collocation(grid, config):
    """Sensor nodes at the pinned time: the dynamics is enforced exactly
    where the branch senses the state."""
    return dn.sensor_coords(grid, config)


def fr_collocation(rng, n_points, spatial_dim=1, t_max=0.5):
    """Random (t, x[, y]) in [0, t_max] x [0, 1]^d, redrawn per iteration."""
    t = rng.uniform(0.0, t_max, size=(n_points, 1))
    x = rng.uniform(0.0, 1.0, size=(n_points, spatial_dim))
    return np.column_stack([t, x])


def ar_collocation(rng, n_points, dt, spatial_dim=1):
    """Random (tau, x[, y]) in [0, dt] x [0, 1]^d: the one-step window."""
    return fr_collocation(rng, n_points, spatial_dim, t_max=dt)
