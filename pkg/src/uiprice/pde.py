"""Finite-difference solver for the semilinear pricing equation.

The buy-side price ``phi(t, s, x)`` solves

    phi_t + L phi - h^m(beta' phi_x) = 0,    phi(T) = f,

where ``L`` is the generator of ``(S, X)`` under the minimal martingale
measure and ``h^m`` the truncated Hamiltonian; the sell side flips the sign of
the ``h^m`` term. Traded coordinates are solved in ``y = log s`` so that all
diffusion coefficients are constant.

Time stepping marches in ``tau = T - t`` with the Hundsdorfer-Verwer ADI
scheme: one-dimensional diffusion and drift terms are implicit along their
axis, mixed derivatives and the nonlinear term are explicit. The first two
steps are replaced by four implicit half steps (Rannacher start-up) to damp
payoff irregularities.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.stats import norm

from . import kernels
from .errors import ModelValidationError, NumericalDivergence, UIPError
from .model import MarketModel, State, ou_conditional_moments
from .payoff import DISCONTINUOUS, Payoff, mollify
from .quadrature import log_expectation_exp, tensor_points

HV_THETA = 0.5 + np.sqrt(3.0) / 6.0
MAX_DIM = 3
MIN_NODES = 5


def truncated_hamiltonian(q, gamma, m=np.inf):
    """``h^m(q) = sup_{|delta| <= m} (-q.delta - |delta|^2/(2 gamma))`` and its maximiser.

    Returns ``(value, delta_hat)``; for ``gamma |q| <= m`` this is
    ``(gamma/2 |q|^2, -gamma q)``.
    """
    if gamma <= 0 or m <= 0:
        raise ModelValidationError("truncated Hamiltonian needs gamma > 0 and m > 0")
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    val, delta = kernels.hamiltonian_field(np.atleast_2d(q), gamma, m)
    return (float(val[0]), delta[0]) if single else (val, delta)


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Grid:
    """Tensor grid in ``(log s_1..log s_n, x_1..x_d)`` plus output times.

    ``times`` are calendar times ``t_0 < ... < t_K = T`` at which the solution
    is stored.
    """

    axes: tuple
    n: int
    d: int
    times: np.ndarray

    def __post_init__(self):
        for k, ax in enumerate(self.axes):
            ax = np.asarray(ax, dtype=float)
            if ax.size < MIN_NODES or np.any(np.diff(ax) <= 0):
                raise ModelValidationError(f"grid axis {k} must be strictly increasing with >= {MIN_NODES} nodes")
        if self.times.size < 2 or np.any(np.diff(self.times) <= 0):
            raise ModelValidationError("grid times must be strictly increasing")

    @property
    def shape(self):
        return tuple(ax.size for ax in self.axes)

    @property
    def steps(self):
        return np.array([ax[1] - ax[0] for ax in self.axes])

    def natural(self, k):
        """Node coordinates of axis ``k`` in price units (``s`` for traded axes)."""
        return np.exp(self.axes[k]) if k < self.n else self.axes[k]

    def mesh(self):
        """Arrays ``s`` (shape + (n,)) and ``x`` (shape + (d,)) over all nodes."""
        grids = np.meshgrid(*[self.natural(k) for k in range(len(self.axes))], indexing="ij")
        pts = np.stack(grids, axis=-1) if grids else np.zeros(self.shape + (0,))
        return pts[..., : self.n], pts[..., self.n:]

    def to_dict(self):
        return {"axes": [ax.tolist() for ax in self.axes], "n": self.n, "d": self.d,
                "times": self.times.tolist()}


@dataclass(frozen=True)
class GridSpec:
    """Grid resolution request.

    ``nodes`` is one count per axis (or a single count for all axes), ``steps``
    the number of stored time levels, ``n_sd`` the half-width of each axis in
    standard deviations of the terminal law.
    """

    nodes: object = 101
    steps: int = 64
    n_sd: float = 5.0
    min_substeps: int = 1


def build_grid(model: MarketModel, spot: State, spec: GridSpec = GridSpec()) -> Grid:
    """Axes of ``spec.nodes`` points covering ``+- n_sd`` terminal standard deviations.

    Each axis is shifted so that the spot coordinate is a node.
    """
    spot.check(model)
    dim = model.dim
    if dim > MAX_DIM:
        raise ModelValidationError(f"dense PDE grids support n + d <= {MAX_DIM}, got {dim}; "
                                   "use the bsde or expand engine")
    nodes = np.broadcast_to(np.asarray(spec.nodes, dtype=int), (dim,))
    tau = model.T - spot.t
    if tau <= 0:
        raise ModelValidationError("spot time must be before the horizon")
    axes = []
    csig = model.cov_traded
    for i in range(model.n):
        sd = np.sqrt(csig[i, i] * tau)
        c = np.log(spot.s[i])
        lo = min(c, c - 0.5 * csig[i, i] * tau) - spec.n_sd * sd
        hi = max(c, c - 0.5 * csig[i, i] * tau) + spec.n_sd * sd
        axes.append(_aligned_axis(lo, hi, c, int(nodes[i])))
    if model.d:
        law = ou_conditional_moments(model, spot.t, model.T, spot.x)
        sd_T = law.std
        sd_now = np.sqrt(np.diag(model.cov_nontraded) * tau)
        for k in range(model.d):
            sd = max(sd_T[k], sd_now[k])
            lo = min(spot.x[k], law.mean[k]) - spec.n_sd * sd
            hi = max(spot.x[k], law.mean[k]) + spec.n_sd * sd
            axes.append(_aligned_axis(lo, hi, spot.x[k], int(nodes[model.n + k])))
    times = np.linspace(spot.t, model.T, int(spec.steps) + 1)
    return Grid(axes=tuple(axes), n=model.n, d=model.d, times=times)


def _aligned_axis(lo, hi, c, num):
    h = (hi - lo) / (num - 1)
    k = round((c - lo) / h)
    start = c - k * h
    return start + h * np.arange(num)


# ---------------------------------------------------------------------------
# spatial operators
# ---------------------------------------------------------------------------

class _Operator:
    """Discrete pieces of ``L`` and the nonlinear term on one grid."""

    def __init__(self, model: MarketModel, grid: Grid, gamma, m, sign):
        self.model = model
        self.grid = grid
        self.gamma = float(gamma)
        self.m = float(m)
        self.sign = sign
        self.h = grid.steps
        self.dim = len(grid.axes)
        self.diff = np.concatenate([0.5 * np.diag(model.cov_traded), 0.5 * np.diag(model.cov_nontraded)])
        full = np.zeros((self.dim, self.dim))
        full[: model.n, : model.n] = model.cov_traded
        full[model.n:, model.n:] = model.cov_nontraded
        self.mixed = [(i, j, full[i, j]) for i in range(self.dim) for j in range(i + 1, self.dim)
                      if full[i, j] != 0.0]
        self.extrap = [self._extrap_weights(k) for k in range(self.dim)]

    def _extrap_weights(self, k):
        z = self.grid.natural(k)
        w0 = (z[0] - z[1]) / (z[2] - z[1])
        w1 = (z[-1] - z[-2]) / (z[-3] - z[-2])
        # u_0 = (1 - w0) u_1 + w0 u_2 ; u_N = (1 - w1) u_{N-1} + w1 u_{N-2}
        return (1.0 - w0, w0, 1.0 - w1, w1)

    def velocity(self, k, tau):
        """Drift along axis ``k`` at ``tau = T - t`` (per node)."""
        ax = self.grid.axes[k]
        if k < self.grid.n:
            return np.full(ax.size, -self.diff[k])
        j = k - self.grid.n
        t = self.model.T - tau
        return self.model.b_at(t)[j] - self.model.alpha[j] * ax

    def stencil(self, k, tau):
        """Tridiagonal coefficients of the 1-D operator along axis ``k``."""
        hk = self.h[k]
        D = self.diff[k]
        v = self.velocity(k, tau)
        lower = np.full(v.size, D / hk**2) - v / (2 * hk)
        diag = np.full(v.size, -2.0 * D / hk**2)
        upper = np.full(v.size, D / hk**2) + v / (2 * hk)
        # upwind where the cell Peclet number exceeds 2
        peclet = np.abs(v) * hk / max(D, 1e-300)
        up = peclet > 2.0
        if np.any(up):
            pos = up & (v > 0)
            neg = up & (v <= 0)
            lower[pos] = D / hk**2
            diag[pos] = -2.0 * D / hk**2 - v[pos] / hk
            upper[pos] = D / hk**2 + v[pos] / hk
            lower[neg] = D / hk**2 - v[neg] / hk
            diag[neg] = -2.0 * D / hk**2 + v[neg] / hk
            upper[neg] = D / hk**2
        return lower, diag, upper

    def extrapolate(self, u):
        """Impose linear extrapolation (in natural coordinates) on every face."""
        for k in range(self.dim):
            a0, b0, a1, b1 = self.extrap[k]
            v = np.moveaxis(u, k, 0)
            v[0] = a0 * v[1] + b0 * v[2]
            v[-1] = a1 * v[-2] + b1 * v[-3]
        return u

    def apply_axis(self, u, k, tau):
        lower, diag, upper = self.stencil(k, tau)
        v = np.moveaxis(u, k, -1)
        shp = v.shape
        out = kernels.apply_tridiag(lower, diag, upper, v.reshape(-1, shp[-1]))
        return np.moveaxis(out.reshape(shp), -1, k)

    def solve_axis(self, rhs, k, tau, coef):
        """Solve ``(I - coef A_k) u = rhs`` along axis ``k`` on interior nodes."""
        lower, diag, upper = self.stencil(k, tau)
        a0, b0, a1, b1 = self.extrap[k]
        lo = -coef * lower[1:-1]
        di = 1.0 - coef * diag[1:-1]
        up = -coef * upper[1:-1]
        di[0] += lo[0] * a0
        up[0] += lo[0] * b0
        di[-1] += up[-1] * a1
        lo[-1] += up[-1] * b1
        v = np.moveaxis(rhs, k, -1)
        shp = v.shape
        flat = v.reshape(-1, shp[-1])
        inner = kernels.tridiag_solve(lo, di, up, flat[:, 1:-1])
        out = np.empty_like(flat)
        out[:, 1:-1] = inner
        out[:, 0] = a0 * inner[:, 0] + b0 * inner[:, 1]
        out[:, -1] = a1 * inner[:, -1] + b1 * inner[:, -2]
        return np.moveaxis(out.reshape(shp), -1, k)

    def _interior(self):
        return tuple(slice(1, -1) for _ in range(self.dim))

    def gradient_x(self, u):
        """Central differences of ``u`` along nontraded axes on interior nodes."""
        n = self.grid.n
        inner = self._interior()
        out = []
        for j in range(self.grid.d):
            k = n + j
            hi = list(inner)
            lo = list(inner)
            hi[k] = slice(2, None)
            lo[k] = slice(None, -2)
            out.append((u[tuple(hi)] - u[tuple(lo)]) / (2 * self.h[k]))
        return out

    def explicit_part(self, u):
        """Mixed derivatives plus the nonlinear term, zero on boundary nodes."""
        out = np.zeros_like(u)
        inner = self._interior()
        for i, j, c in self.mixed:
            def sl(di, dj):
                idx = list(inner)
                idx[i] = slice(1 + di, u.shape[i] - 1 + di)
                idx[j] = slice(1 + dj, u.shape[j] - 1 + dj)
                return tuple(idx)
            out[inner] += c * (u[sl(1, 1)] - u[sl(1, -1)] - u[sl(-1, 1)] + u[sl(-1, -1)]) / (
                4 * self.h[i] * self.h[j])
        if self.gamma > 0 and self.grid.d:
            grads = self.gradient_x(u)
            px = np.stack([g.ravel() for g in grads], axis=-1)
            q = px @ self.model.beta
            val, _ = kernels.hamiltonian_field(q, self.gamma, self.m)
            free = self.gamma * np.sqrt(np.einsum("ij,ij->i", q, q)) <= self.m
            if np.any(free):
                quad = self._squared_norm(u, grads).ravel()
                val[free] = 0.5 * self.gamma * quad[free]
            out[inner] -= self.sign * val.reshape(grads[0].shape)
        return out

    def _squared_norm(self, u, grads):
        """``|beta' phi_x|^2`` with diagonal squares averaged over the one-sided differences.

        ``(a^2 + b^2) / (2 h^2)`` is the second-order expansion of the
        Cole-Hopf-consistent discretisation, which keeps steep initial fronts
        from being under-penalised by the central product.
        """
        n = self.grid.n
        cov = self.model.cov_nontraded
        inner = self._interior()
        total = np.zeros(grads[0].shape)
        for j in range(self.grid.d):
            k = n + j
            hi, mid, lo = list(inner), list(inner), list(inner)
            hi[k] = slice(2, None)
            lo[k] = slice(None, -2)
            a = (u[tuple(hi)] - u[tuple(mid)]) / self.h[k]
            b = (u[tuple(mid)] - u[tuple(lo)]) / self.h[k]
            total += cov[j, j] * 0.5 * (a * a + b * b)
            for i in range(j + 1, self.grid.d):
                if cov[i, j] != 0.0:
                    total += 2.0 * cov[i, j] * grads[i] * grads[j]
        return total

    def full(self, u, tau):
        out = self.explicit_part(u)
        for k in range(self.dim):
            out += self.apply_axis(u, k, tau)
        return out

    def max_velocity(self, u):
        """Largest advection speed induced by the nonlinear term, ``gamma |beta beta' phi_x|``."""
        if self.gamma == 0 or not self.grid.d:
            return 0.0
        grads = self.gradient_x(u)
        px = np.stack([g.ravel() for g in grads], axis=-1)
        speed = self.gamma * np.abs(px @ self.model.cov_nontraded)
        if np.isfinite(self.m):
            speed = np.minimum(speed, self.m * np.max(np.abs(self.model.beta)))
        return float(np.max(speed)) if speed.size else 0.0


def _douglas_step(op: _Operator, u, tau, dt, theta=1.0):
    f0 = op.full(u, tau)
    y = op.extrapolate(u + dt * f0)
    tm = tau + 0.5 * dt
    for k in range(op.dim):
        y = y - theta * dt * op.apply_axis(u, k, tm)
        y = op.solve_axis(y, k, tm, theta * dt)
    return y


def _hv_step(op: _Operator, u, tau, dt, theta=HV_THETA):
    tm = tau + 0.5 * dt
    fu = op.full(u, tau)
    y0 = op.extrapolate(u + dt * fu)
    y = y0
    for k in range(op.dim):
        y = op.solve_axis(y - theta * dt * op.apply_axis(u, k, tm), k, tm, theta * dt)
    fy = op.full(y, tau + dt)
    z = op.extrapolate(y0 + 0.5 * dt * (fy - fu))
    for k in range(op.dim):
        z = op.solve_axis(z - theta * dt * op.apply_axis(y, k, tm), k, tm, theta * dt)
    return z


# ---------------------------------------------------------------------------
# price surface
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PriceSurface:
    """Solution values ``phi(t_k, nodes)`` for all stored times ``t_k``.

    Gradients in ``s`` and ``x`` are formed on demand by central differences
    (second-order one-sided at the faces).
    """

    grid: Grid
    values: np.ndarray
    gamma: float
    side: str
    m: float
    meta: dict = field(default_factory=dict)
    _grads: dict = field(default_factory=dict, repr=False)
    _interp: dict = field(default_factory=dict, repr=False)

    @property
    def times(self):
        return self.grid.times

    def gradients(self, k):
        """``(phi_s, phi_x)`` at stored level ``k`` as arrays of shape grid + (n,), grid + (d,)."""
        if k not in self._grads:
            u = self.values[k]
            g = self.grid
            parts = [np.gradient(u, g.axes[a], axis=a, edge_order=2) for a in range(len(g.axes))]
            s_nodes, _ = g.mesh()
            phi_s = np.stack(parts[: g.n], axis=-1) / s_nodes if g.n else np.zeros(u.shape + (0,))
            phi_x = np.stack(parts[g.n:], axis=-1) if g.d else np.zeros(u.shape + (0,))
            self._grads[k] = (phi_s, phi_x)
        return self._grads[k]

    def _query(self, s, x):
        s = np.atleast_2d(np.asarray(s, dtype=float)) if self.grid.n else np.zeros((np.atleast_2d(x).shape[0], 0))
        x = np.atleast_2d(np.asarray(x, dtype=float)) if self.grid.d else np.zeros((s.shape[0], 0))
        pts = np.concatenate([np.log(s), x], axis=-1)
        for k, ax in enumerate(self.grid.axes):
            tol = 1e-9 * (ax[-1] - ax[0])
            if np.any(pts[:, k] < ax[0] - tol) or np.any(pts[:, k] > ax[-1] + tol):
                raise ModelValidationError(f"query outside the grid hull on axis {k}")
            pts[:, k] = np.clip(pts[:, k], ax[0], ax[-1])
        return pts

    def _level(self, t):
        ts = self.grid.times
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise ModelValidationError(f"time {t} outside the solved range [{ts[0]}, {ts[-1]}]")
        k = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, ts.size - 2))
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return k, float(np.clip(w, 0.0, 1.0))

    def _interpolate(self, key, arr, pts, method):
        ikey = (key, method)
        if ikey not in self._interp:
            self._interp[ikey] = RegularGridInterpolator(self.grid.axes, arr, method=method)
        return self._interp[ikey](pts)

    def value(self, t, s, x, method="linear"):
        """``phi(t, s, x)`` for rows of ``s`` (m, n) and ``x`` (m, d)."""
        pts = self._query(s, x)
        k, w = self._level(t)
        out = (1 - w) * self._interpolate(("v", k), self.values[k], pts, method)
        if w > 0:
            out = out + w * self._interpolate(("v", k + 1), self.values[k + 1], pts, method)
        return out

    def gradient(self, t, s, x, method="linear"):
        """Interpolated ``(phi_s (m, n), phi_x (m, d))``."""
        pts = self._query(s, x)
        k, w = self._level(t)
        res = []
        for part in (0, 1):
            dims = self.grid.n if part == 0 else self.grid.d
            cols = []
            for c in range(dims):
                a = self._interpolate(("g", part, c, k), self.gradients(k)[part][..., c], pts, method)
                if w > 0:
                    b = self._interpolate(("g", part, c, k + 1), self.gradients(k + 1)[part][..., c], pts, method)
                    a = (1 - w) * a + w * b
                cols.append(a)
            res.append(np.stack(cols, axis=-1) if cols else np.zeros((pts.shape[0], 0)))
        return res[0], res[1]

    def at_spot(self, state: State, method="linear"):
        return float(self.value(state.t, state.s[None, :], state.x[None, :], method)[0])

    def to_csv(self, path, levels=None):
        g = self.grid
        levels = range(len(g.times)) if levels is None else levels
        s_nodes, x_nodes = g.mesh()
        header = (["time"] + [f"s{i + 1}" for i in range(g.n)] + [f"x{j + 1}" for j in range(g.d)] + ["value"]
                  + [f"phi_s{i + 1}" for i in range(g.n)] + [f"phi_x{j + 1}" for j in range(g.d)])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in levels:
                ps, px = self.gradients(k)
                flat = [s_nodes.reshape(-1, g.n), x_nodes.reshape(-1, g.d), self.values[k].reshape(-1, 1),
                        ps.reshape(-1, g.n), px.reshape(-1, g.d)]
                rows = np.concatenate(flat, axis=1)
                for r in rows:
                    w.writerow([f"{g.times[k]:.17g}"] + [f"{v:.17g}" for v in r])


def cache_key(model: MarketModel, payoff: Payoff, gamma, grid: Grid, side="buy", m=np.inf):
    blob = json.dumps({"model": model.to_dict(), "payoff": payoff.spec, "gamma": float(gamma),
                       "grid": grid.to_dict(), "side": side, "m": str(m)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def solve_uip_pde(model: MarketModel, payoff: Payoff, gamma, grid: Grid, m=np.inf, side="buy",
                  mollify_index=None, max_substeps=200000, dt_max=None) -> PriceSurface:
    """Backward solve of the pricing equation on ``grid``.

    Parameters
    ----------
    gamma : risk aversion; ``0`` gives the linear price under the minimal
        martingale measure.
    m : truncation radius of the Hamiltonian (``inf`` for none).
    side : ``"buy"`` or ``"sell"``.
    mollify_index : smoothing index for payoffs discontinuous in ``x``;
        defaults to one cell of the finest nontraded axis.
    dt_max : optional cap on the internal time step, on top of the
        diffusion and stability caps.
    """
    if side not in ("buy", "sell"):
        raise ModelValidationError(f"side must be 'buy' or 'sell', got {side!r}")
    if gamma < 0:
        raise ModelValidationError("gamma must be nonnegative")
    if m <= 0:
        raise ModelValidationError("truncation radius m must be positive")
    if (grid.n, grid.d) != (model.n, model.d) or (payoff.n, payoff.d) != (model.n, model.d):
        raise ModelValidationError("grid, payoff and model dimensions disagree")
    if len(grid.axes) > MAX_DIM:
        raise ModelValidationError(f"dense PDE grids support n + d <= {MAX_DIM}")
    sign = 1.0 if side == "buy" else -1.0
    op = _Operator(model, grid, gamma, m, sign)

    used = payoff
    l_used = None
    if payoff.regularity == DISCONTINUOUS:
        l_used = mollify_index if mollify_index is not None else 1.0 / float(np.min(grid.steps[grid.n:]))
        used = mollify(payoff, max(1.0, l_used))
    s_nodes, x_nodes = grid.mesh()
    u = np.array(used.func(s_nodes, x_nodes), dtype=float).reshape(grid.shape)
    if not np.all(np.isfinite(u)):
        raise UIPError("payoff is not finite on the grid")
    envelope = 10.0 * max(1.0, float(np.max(np.abs(u))))

    times = grid.times
    K = times.size - 1
    values = np.empty((K + 1,) + grid.shape)
    values[K] = u
    dt_diff = float(np.min(grid.steps**2 / (2.0 * np.maximum(op.diff, 1e-300))))
    dt_cap = min(dt_diff, 1e-3 * model.T)
    if dt_max is not None:
        dt_cap = min(dt_cap, float(dt_max))
    total_sub = 0
    started = False
    tau = 0.0
    for k in range(K, 0, -1):
        span = times[k] - times[k - 1]
        done = 0.0
        while done < span * (1 - 1e-12):
            vmax = op.max_velocity(u)
            dt = min(dt_cap, span - done)
            if vmax > 0:
                h_x = float(np.min(grid.steps[grid.n:]))
                d_min = float(np.min(op.diff[grid.n:]))
                dt = min(dt, 0.5 * h_x / vmax, 2.0 * d_min / vmax**2)
            if not started:
                dt = min(dt, 0.5 * (span - done))
                # Rannacher start-up: four implicit half steps
                for _ in range(4):
                    u = _douglas_step(op, u, tau, 0.5 * dt, theta=1.0)
                    tau += 0.5 * dt
                done += 2 * dt
                total_sub += 4
                started = True
            else:
                u = _hv_step(op, u, tau, dt)
                tau += dt
                done += dt
                total_sub += 1
            if total_sub > max_substeps:
                raise NumericalDivergence("time step collapsed below the substep budget",
                                          diagnostics={"t": model.T - tau, "substeps": total_sub})
        bad = ~np.isfinite(u)
        if np.any(bad) or np.max(np.abs(u)) > envelope:
            raise NumericalDivergence(
                "PDE solution left the payoff envelope",
                diagnostics={"t": float(times[k - 1]), "max_abs": float(np.nanmax(np.abs(u))),
                             "envelope": envelope, "nonfinite": int(bad.sum())})
        values[k - 1] = u
    values[K] = np.array(used.func(s_nodes, x_nodes), dtype=float).reshape(grid.shape)
    meta = {"substeps": total_sub, "mollify_index": l_used, "backend": kernels.USE_NUMBA and "numba" or "numpy",
            "dt_cap": dt_cap}
    return PriceSurface(grid=grid, values=values, gamma=float(gamma), side=side, m=float(m), meta=meta)


# ---------------------------------------------------------------------------
# closed-form oracles
# ---------------------------------------------------------------------------

def burgers_bound_constant(gamma, beta):
    """``C`` with ``g(t, x) <= C / sqrt(t)``."""
    return beta * np.expm1(gamma / beta**2) / (gamma * np.sqrt(2 * np.pi))


def burgers_reference(t_elapsed, x, gamma, beta):
    """Closed-form gradient of the digital price after ``t_elapsed`` years.

    ``g(t,x) = beta e^{-x^2/(2 beta^2 t)} (1 - e^{-gamma/beta^2})
    / (gamma sqrt(2 pi t) [(e^{-gamma/beta^2} - 1) Phi(x/(beta sqrt t)) + 1])``.
    It solves ``g_t + gamma g g_x = beta^2 g_xx / 2`` and coincides with the
    price gradient of ``1{x >= 0}`` for ``beta = 1``; for general ``beta`` the
    price gradient is ``burgers_reference(t, x, gamma * beta**2, beta)``.
    """
    t = np.asarray(t_elapsed, dtype=float)
    if np.any(t <= 0) or beta <= 0 or gamma <= 0:
        raise ModelValidationError("burgers_reference needs t_elapsed > 0, beta > 0, gamma > 0")
    x = np.asarray(x, dtype=float)
    e = np.exp(-gamma / beta**2)
    u = x / (beta * np.sqrt(t))
    return beta * np.exp(-0.5 * u**2) * (1 - e) / (gamma * np.sqrt(2 * np.pi * t) * ((e - 1) * norm.cdf(u) + 1))


def certainty_equivalent(model: MarketModel, payoff: Payoff, gamma, t, x, nodes=64, paths=200000, seed=0):
    """``-(1/gamma) log E[exp(-gamma f(X_T)) | X_t = x]`` for a bounded claim on ``X`` only.

    Returns ``(value, se)``; the standard error is zero on the quadrature
    route (``d <= 2``) and a delta-method estimate on the Monte Carlo route.
    """
    if payoff.depends_on_s:
        raise ModelValidationError("certainty_equivalent needs a payoff that does not depend on s")
    if not payoff.is_bounded:
        raise ModelValidationError("certainty_equivalent needs a bounded payoff")
    if gamma <= 0:
        raise ModelValidationError("gamma must be positive")
    law = ou_conditional_moments(model, t, model.T, x)
    dummy_s = np.ones(model.n)
    if model.d <= 2:
        pts, wts = tensor_points(law, nodes)
        f = payoff.func(np.broadcast_to(dummy_s, (pts.shape[0], model.n)), pts)
        return -log_expectation_exp(-gamma * f, wts) / gamma, 0.0
    from .rng import standard_normals
    z = standard_normals(seed, paths, (model.d,))
    pts = law.mean + z @ np.linalg.cholesky(law.cov + 1e-300 * np.eye(model.d)).T
    f = payoff.func(np.broadcast_to(dummy_s, (paths, model.n)), pts)
    lw = -gamma * f
    val = -log_expectation_exp(lw) / gamma
    w = np.exp(lw - lw.max())
    se = np.std(w) / np.sqrt(paths) / np.mean(w) / gamma
    return val, se


def black_scholes_call(s, strike, vol, tau):
    """Zero-rate Black-Scholes call value and delta."""
    s = np.asarray(s, dtype=float)
    sd = vol * np.sqrt(tau)
    d1 = (np.log(s / strike) + 0.5 * sd**2) / sd
    d2 = d1 - sd
    return s * norm.cdf(d1) - strike * norm.cdf(d2), norm.cdf(d1)
