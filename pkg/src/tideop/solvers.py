"""Reference integrators for the three benchmark PDEs.

Each solver records both the field and its time derivative at the
requested coarse output times while stepping on a much finer internal
grid. Batched variants step many initial conditions in lockstep; the
Trajectory-returning wrappers are thin views over those.

Equations (all on unit domains):
  heat1d      u_t = alpha u_xx,                 Dirichlet u = 0
  burgers1d   u_t = nu u_xx - u u_x,            periodic
  allencahn2d u_t = eps^2 (u_xx + u_yy) - (u^3 - u), periodic
"""

from __future__ import annotations

import numpy as np

from .grids import Grid1D, Grid2D, Trajectory

HEAT_ALPHA = 0.01
BURGERS_NU = 0.01
AC_EPS = 0.05

# 4th-order one-sided second-derivative stencil (forward form)
_ONESIDED = np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0


def _steps_per_out(dt_out, fine_dt):
    n = dt_out / fine_dt
    n_int = int(round(n))
    if abs(n - n_int) > 1e-9 or n_int < 1:
        raise ValueError(f"output step {dt_out} is not a multiple of fine step {fine_dt}")
    return n_int


# ---------------------------------------------------------------------------
# heat


def heat_u_xx(u, h):
    """Second derivative: 2nd-order central inside, 4th-order one-sided at ends.

    The boundary stencils are written out elementwise so batched and
    single evaluations round identically.
    """
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    out[..., 1:-1] = (u[..., :-2] - 2.0 * u[..., 1:-1] + u[..., 2:]) / h**2
    for dst, idx in ((0, np.arange(6)), (-1, -1 - np.arange(6))):
        acc = _ONESIDED[0] * u[..., idx[0]]
        for c, i in zip(_ONESIDED[1:], idx[1:]):
            acc = acc + c * u[..., i]
        out[..., dst] = acc / h**2
    return out


def solve_heat_batch(ic, grid, T, dt_out, alpha=HEAT_ALPHA, fine_steps_per_unit=10_000):
    """Explicit FTCS on a batch of initial conditions.

    Returns (times, u, u_t) with u of shape (n_ic, n_times, n_points).
    The internal step 1/fine_steps_per_unit must satisfy the explicit
    stability bound dt <= dx^2 / (2 alpha).
    """
    ic = np.atleast_2d(np.asarray(ic, dtype=np.float64))
    h = grid.spacing
    fine_dt = 1.0 / fine_steps_per_unit
    if fine_dt > h * h / (2.0 * alpha) + 1e-15:
        raise ValueError("fine step violates the explicit stability bound")
    per_out = _steps_per_out(dt_out, fine_dt)
    n_out = int(round(T / dt_out)) + 1
    times = np.arange(n_out) * dt_out
    u = ic.copy()
    u[:, 0] = 0.0
    u[:, -1] = 0.0
    path = np.empty((ic.shape[0], n_out, grid.n_points))
    path_t = np.empty_like(path)
    r = alpha * fine_dt / h**2
    for k in range(n_out):
        if k:
            for _ in range(per_out):
                u[:, 1:-1] += r * (u[:, :-2] - 2.0 * u[:, 1:-1] + u[:, 2:])
                u[:, 0] = 0.0
                u[:, -1] = 0.0
        path[:, k] = u
        path_t[:, k] = alpha * heat_u_xx(u, h)
    return times, path, path_t


def solve_heat(ic, grid, T, dt_out, ic_seed=0, **kw):
    times, u, ut = solve_heat_batch(ic, grid, T, dt_out, **kw)
    return Trajectory(times, u[0], ut[0], ic_seed)


# ---------------------------------------------------------------------------
# burgers


def _spectral_ux_uxx(u_hat, k):
    ux = np.fft.irfft(1j * k * u_hat, axis=-1)
    uxx = np.fft.irfft(-(k * k) * u_hat, axis=-1)
    return ux, uxx


def burgers_time_derivative(u, nu=BURGERS_NU):
    """nu u_xx - u u_x of a profile on the 101-node seam grid, spectrally.

    The last node duplicates the first (periodic seam); derivatives are
    computed from the 100-point periodic core with no dealiasing and the
    seam value is duplicated back.
    """
    u = np.asarray(u, dtype=np.float64)
    core = u[..., :-1]
    n = core.shape[-1]
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=1.0 / n)
    u_hat = np.fft.rfft(core, axis=-1)
    ux, uxx = _spectral_ux_uxx(u_hat, k)
    rhs = nu * uxx - core * ux
    return np.concatenate([rhs, rhs[..., :1]], axis=-1)


def solve_burgers_batch(
    ic_fine,
    T=1.0,
    dt_out=0.01,
    n_out_nodes=101,
    nu=BURGERS_NU,
    fine_dt=5e-4,
):
    """Strang-split pseudo-spectral solve on a fine periodic grid.

    ic_fine: (n_ic, n_fine) samples on the uniform periodic grid over
    [0, 1). Diffusion half-steps are exact in Fourier space; the
    advection substep is RK4 on the 2/3-dealiased -u u_x. Output is
    spectrally subsampled to n_out_nodes (seam node duplicated).

    Returns (times, u, u_t); u_t is the spectral right-hand side
    evaluated on the output profiles.
    """
    ic_fine = np.atleast_2d(np.asarray(ic_fine, dtype=np.float64))
    n_fine = ic_fine.shape[-1]
    n_core = n_out_nodes - 1
    if n_fine < n_core:
        raise ValueError("fine grid must be at least as fine as the output grid")
    per_out = _steps_per_out(dt_out, fine_dt)
    n_out = int(round(T / dt_out)) + 1
    times = np.arange(n_out) * dt_out

    k = 2.0 * np.pi * np.fft.rfftfreq(n_fine, d=1.0 / n_fine)
    half_diff = np.exp(-nu * k * k * fine_dt / 2.0)
    dealias = np.ones_like(k)
    dealias[np.abs(np.fft.rfftfreq(n_fine)) > 1.0 / 3.0] = 0.0

    def advect_rhs(v_hat):
        vd = v_hat * dealias
        v = np.fft.irfft(vd, axis=-1)
        vx = np.fft.irfft(1j * k * vd, axis=-1)
        return -np.fft.rfft(v * vx, axis=-1) * dealias

    v_hat = np.fft.rfft(ic_fine, axis=-1)
    path = np.empty((ic_fine.shape[0], n_out, n_out_nodes))
    path_t = np.empty_like(path)

    def record(idx, v_hat):
        # fold the fine spectrum onto the coarse modes: exact trig
        # interpolation of the band-limited field at the output nodes
        coarse = np.zeros((v_hat.shape[0], n_core // 2 + 1), dtype=complex)
        keep = min(n_core // 2, n_fine // 2)
        coarse[:, : keep + 1] = v_hat[:, : keep + 1]
        u_out = np.fft.irfft(coarse, n=n_core, axis=-1) * (n_core / n_fine)
        u_out = np.concatenate([u_out, u_out[:, :1]], axis=-1)
        path[:, idx] = u_out
        path_t[:, idx] = burgers_time_derivative(u_out, nu)

    record(0, v_hat)
    for idx in range(1, n_out):
        for _ in range(per_out):
            v_hat = v_hat * half_diff
            a = advect_rhs(v_hat)
            b = advect_rhs(v_hat + fine_dt / 2.0 * a)
            c = advect_rhs(v_hat + fine_dt / 2.0 * b)
            d = advect_rhs(v_hat + fine_dt * c)
            v_hat = v_hat + fine_dt / 6.0 * (a + 2.0 * b + 2.0 * c + d)
            v_hat = v_hat * half_diff
        record(idx, v_hat)
    return times, path, path_t


def solve_burgers(ic_fn, T=1.0, dt_out=0.01, n_fine=4096, ic_seed=0, **kw):
    """Solve one initial condition given as a callable over [0, 1)."""
    x_fine = np.arange(n_fine) / n_fine
    times, u, ut = solve_burgers_batch(ic_fn(x_fine)[None, :], T, dt_out, **kw)
    return Trajectory(times, u[0], ut[0], ic_seed)


# ---------------------------------------------------------------------------
# allen-cahn


def _ac_wavenumbers(grid):
    kx = 2.0 * np.pi * np.fft.fftfreq(grid.nx, d=1.0 / grid.nx)
    ky = 2.0 * np.pi * np.fft.fftfreq(grid.ny, d=1.0 / grid.ny)
    return kx[:, None], ky[None, :]


def ac_rhs(u, grid, eps=AC_EPS):
    """eps^2 laplacian(u) - (u^3 - u), spectral laplacian."""
    u = np.asarray(u, dtype=np.float64)
    kx, ky = _ac_wavenumbers(grid)
    lap = np.fft.ifft2(-(kx * kx + ky * ky) * np.fft.fft2(u, axes=(-2, -1)), axes=(-2, -1)).real
    return eps * eps * lap - (u**3 - u)


def ac_energy(u, grid, eps=AC_EPS):
    """Free energy: mean of eps^2/2 |grad u|^2 + (u^2-1)^2/4 over the unit square."""
    u = np.asarray(u, dtype=np.float64)
    kx, ky = _ac_wavenumbers(grid)
    u_hat = np.fft.fft2(u, axes=(-2, -1))
    ux = np.fft.ifft2(1j * kx * u_hat, axes=(-2, -1)).real
    uy = np.fft.ifft2(1j * ky * u_hat, axes=(-2, -1)).real
    dens = eps * eps / 2.0 * (ux * ux + uy * uy) + 0.25 * (u * u - 1.0) ** 2
    return dens.mean(axis=(-2, -1))


def _etdrk4_coeffs(lin_dt, n_contour=32):
    """phi-function coefficients via the contour-integral trick.

    lin_dt is the (real, diagonal) linear operator spectrum times dt;
    averaging over a half circle of radius 1 and taking the real part
    evaluates the analytic phi functions stably near zero.
    """
    r = np.exp(1j * np.pi * (np.arange(n_contour) + 0.5) / n_contour)
    lr = lin_dt[..., None] + r
    e_lr = np.exp(lr)
    q = ((np.exp(lr / 2.0) - 1.0) / lr).mean(-1).real
    f1 = ((-4.0 - lr + e_lr * (4.0 - 3.0 * lr + lr * lr)) / lr**3).mean(-1).real
    f2 = ((2.0 + lr + e_lr * (-2.0 + lr)) / lr**3).mean(-1).real
    f3 = ((-4.0 - 3.0 * lr - lr * lr + e_lr * (4.0 - lr)) / lr**3).mean(-1).real
    return np.exp(lin_dt), np.exp(lin_dt / 2.0), q, f1, f2, f3


def solve_allen_cahn_batch(
    ic,
    grid,
    T=1.0,
    dt_out=0.01,
    eps=AC_EPS,
    fine_per_out=200,
    n_contour=32,
):
    """ETDRK4 with exact diagonal linear part eps^2 laplacian.

    Returns (times, u, u_t) with u of shape (n_ic, n_times, nx, ny);
    u_t is the full right-hand side at the recorded states.
    """
    ic = np.asarray(ic, dtype=np.float64)
    if ic.ndim == 2:
        ic = ic[None]
    kx, ky = _ac_wavenumbers(grid)
    lin = -(eps * eps) * (kx * kx + ky * ky)
    fine_dt = dt_out / fine_per_out
    E, E2, Q, f1, f2, f3 = _etdrk4_coeffs(lin * fine_dt, n_contour)

    def n_of(v_hat):
        u = np.fft.ifft2(v_hat, axes=(-2, -1)).real
        return np.fft.fft2(u - u**3, axes=(-2, -1))

    n_out = int(round(T / dt_out)) + 1
    times = np.arange(n_out) * dt_out
    v = np.fft.fft2(ic, axes=(-2, -1))
    path = np.empty((ic.shape[0], n_out, grid.nx, grid.ny))
    path_t = np.empty_like(path)

    def record(idx, v):
        u = np.fft.ifft2(v, axes=(-2, -1)).real
        path[:, idx] = u
        path_t[:, idx] = ac_rhs(u, grid, eps)

    record(0, v)
    for idx in range(1, n_out):
        for _ in range(fine_per_out):
            nv = n_of(v)
            a = E2 * v + fine_dt * Q * nv
            na = n_of(a)
            b = E2 * v + fine_dt * Q * na
            nb = n_of(b)
            c = E2 * a + fine_dt * Q * (2.0 * nb - nv)
            nc = n_of(c)
            v = E * v + fine_dt * (f1 * nv + 2.0 * f2 * (na + nb) + f3 * nc)
        record(idx, v)
    return times, path, path_t


def solve_allen_cahn(ic, grid, T=1.0, dt_out=0.01, ic_seed=0, **kw):
    times, u, ut = solve_allen_cahn_batch(ic, grid, T, dt_out, **kw)
    return Trajectory(times, u[0], ut[0], ic_seed)
