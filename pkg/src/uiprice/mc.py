"""Monte Carlo engines under the minimal martingale measure.

* ``price_mmm`` - linear price ``p0 = E0[f(A_T)]``.
* ``solve_bsde`` - least-squares regression scheme for the quadratic BSDE
  ``Y_t = f - int sign * h^m(Z^X) ds - int Z dW0``.
* ``weight_process_N`` / ``malliavin_gradient`` - payoff-derivative-free
  gradient estimator ``phi_a = E0[f N_T - int h^m(Z^X_r) N_r dr]``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import ModelValidationError, RankDeficiencyError, UIPError
from .model import MarketModel, PathSet, State, log_traded_moments, ou_conditional_moments, \
    sample_terminal, simulate_paths, time_grid
from .payoff import Payoff
from .quadrature import tensor_points
from .rng import child_seed

RIDGE = 1e-8
COND_LIMIT = 1e12
CHUNK = 65536


def _terminal_values(payoff: Payoff, s, x):
    vals = np.asarray(payoff.func(s, x), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.mean() > 1e-4:
        raise UIPError(f"{bad.sum()} of {vals.size} payoff samples are non-finite")
    return vals[~bad] if bad.any() else vals


def price_mmm(model: MarketModel, payoff: Payoff, state: State, paths=100000, seed=0, quadrature="auto",
              nodes=64, antithetic=False):
    """``(p0, se)`` with ``p0 = E0[f(S_T, X_T) | A_t = a]``.

    ``quadrature="auto"`` uses a tensor Gauss-Hermite rule when ``n + d <= 2``
    and the payoff is smooth (standard error reported as 0); otherwise the
    terminal law is sampled exactly.
    """
    state.check(model)
    if state.t >= model.T:
        return float(np.mean(payoff.func(state.s[None], state.x[None]))), 0.0
    use_quad = quadrature is True or (quadrature == "auto" and model.dim <= 2 and payoff.smooth)
    if use_quad:
        return _price_quadrature(model, payoff, state, nodes), 0.0
    s, x, _, _ = sample_terminal(model, state, int(paths), seed=seed, antithetic=antithetic)
    vals = _terminal_values(payoff, s, x)
    if antithetic:
        half = vals.size // 2
        pair = 0.5 * (vals[:half] + vals[half:2 * half])
        return float(np.mean(vals)), float(np.std(pair, ddof=1) / np.sqrt(pair.size))
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / np.sqrt(vals.size))


def terminal_law(model: MarketModel, state: State):
    """Joint Gaussian law of ``(log S_T, X_T)`` under the minimal martingale measure."""
    from .model import GaussianLaw
    ls = log_traded_moments(model, state.t, model.T, state.s)
    xs = ou_conditional_moments(model, state.t, model.T, state.x)
    cov = np.zeros((model.dim, model.dim))
    cov[: model.n, : model.n] = ls.cov
    cov[model.n:, model.n:] = xs.cov
    return GaussianLaw(np.concatenate([ls.mean, xs.mean]), cov)


def _price_quadrature(model, payoff, state, nodes):
    law = terminal_law(model, state)
    pts, wts = tensor_points(law, nodes)
    vals = payoff.func(np.exp(pts[:, : model.n]), pts[:, model.n:])
    return float(wts @ vals)


# ---------------------------------------------------------------------------
# regression basis
# ---------------------------------------------------------------------------

def monomial_exponents(dim, degree):
    """All exponent vectors with total degree ``<= degree``, constant first."""
    rows = [np.zeros(dim, dtype=np.int64)]
    for deg in range(1, degree + 1):
        for combo in combinations_with_replacement(range(dim), deg):
            e = np.zeros(dim, dtype=np.int64)
            for c in combo:
                e[c] += 1
            rows.append(e)
    return np.array(rows, dtype=np.int64).reshape(-1, dim)


@dataclass(eq=False)
class _StepBasis:
    mean: np.ndarray
    scale: np.ndarray
    keep: np.ndarray  # exponent rows used at this step

    def features(self, z):
        u = (z - self.mean) / self.scale
        return kernels.poly_features(u, self.keep)


def _make_basis(z, exps):
    mean = z.mean(axis=0)
    std = z.std(axis=0)
    live = std > 1e-12 * (1.0 + np.abs(mean))
    scale = np.where(live, std, 1.0)
    keep = exps[np.all((exps == 0) | live[None, :], axis=1)]
    return _StepBasis(mean, scale, keep)


def _ridge_fit(phi, targets, what):
    """Least squares with a small ridge on all but the intercept column."""
    m = phi.shape[0]
    gram = phi.T @ phi / m
    pen = np.full(gram.shape[0], RIDGE)
    pen[0] = 0.0
    gram[np.diag_indices_from(gram)] += pen
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise RankDeficiencyError(
            f"regression design for {what} is rank deficient (condition {cond:.3g}); increase the number of paths "
            "or lower the basis degree")
    return np.linalg.solve(gram, phi.T @ targets / m)


def _state_coords(model, s, x):
    return np.concatenate([np.log(s), x], axis=-1)


# ---------------------------------------------------------------------------
# quadratic BSDE
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class BSDESolution:
    """Output of the regression scheme.

    ``Y`` is (paths, steps+1); ``Z_S``, ``Z_X`` are (paths, steps, n) and
    (paths, steps, d). ``Y0`` is the time-0 estimate with standard error
    ``Y0_se`` from the per-path values ``f - sign * sum h^m(Z^X) dt``.
    """

    times: np.ndarray
    Y: np.ndarray
    Z_S: np.ndarray
    Z_X: np.ndarray
    Y0: float
    Y0_se: float
    basis_spec: dict
    gamma: float
    side: str
    m_auto: np.ndarray
    model: MarketModel = field(repr=False)
    _bases: list = field(default_factory=list, repr=False)
    _zcoef: list = field(default_factory=list, repr=False)

    def step_of(self, t):
        k = int(np.searchsorted(self.times, t + 1e-12, side="right") - 1)
        return int(np.clip(k, 0, self.times.size - 2))

    def z_at(self, k, s, x):
        """Fitted ``(Z^S, Z^X)`` at step ``k`` for new states."""
        phi = self._bases[k].features(_state_coords(self.model, s, x))
        z = phi @ self._zcoef[k]
        return z[:, : self.model.n], z[:, self.model.n:]

    def summary(self):
        zn = np.sqrt(np.mean(np.sum(self.Z_X**2, axis=2), axis=0)) if self.Z_X.size else np.zeros(0)
        return {"schema_version": 1, "Y0": self.Y0, "Y0_se": self.Y0_se, "gamma": self.gamma, "side": self.side,
                "basis": self.basis_spec, "m_auto": self.m_auto.tolist(), "zx_rms_per_step": zn.tolist(),
                "paths": int(self.Y.shape[0]), "steps": int(self.times.size - 1)}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def solve_bsde(model: MarketModel, payoff: Payoff, gamma, side="buy", steps=64, paths=100000, degree=3,
               seed=0, state: Optional[State] = None, antithetic=False, threads=1, truncation="auto",
               pathset: Optional[PathSet] = None) -> BSDESolution:
    """Backward regression scheme for the pricing BSDE under the minimal martingale measure.

    At each step ``k`` (from ``K - 1`` down to 0):

    * ``Z_k`` regresses ``(Y_{k+1} - c_k) dW0_k / dt`` on a polynomial basis in
      ``(log S_k, X_k)``, where ``c_k`` is the regression of ``Y_{k+1}``
      itself (a control variate that leaves the conditional mean unchanged);
    * the driver ``h^m(Z^X_k)`` uses ``m_auto = 10 x`` the empirical 99.9%
      quantile of ``gamma |Z^X_k|`` (``truncation=inf`` disables it);
    * ``Y_k`` regresses ``Y_{k+1} - sign h^m(Z^X_k) dt`` on the same basis.
    """
    if side not in ("buy", "sell"):
        raise ModelValidationError(f"side must be 'buy' or 'sell', got {side!r}")
    if paths < 1000 or steps < 8:
        raise ModelValidationError("solve_bsde needs at least 1000 paths and 8 steps")
    if gamma < 0:
        raise ModelValidationError("gamma must be nonnegative")
    sign = 1.0 if side == "buy" else -1.0
    if pathset is None:
        if state is None:
            raise ModelValidationError("solve_bsde needs a start state or a path set")
        pathset = simulate_paths(model, state, "Q0", steps=steps, paths=paths, seed=seed, antithetic=antithetic,
                                 threads=threads)
    elif pathset.measure != "Q0":
        raise ModelValidationError("BSDE paths must be simulated under Q0")
    n, d = model.n, model.d
    M, K = pathset.n_paths, pathset.n_steps
    exps = monomial_exponents(model.dim, degree)
    Y = np.empty((M, K + 1))
    Z_S = np.empty((M, K, n))
    Z_X = np.empty((M, K, d))
    Y[:, K] = _terminal_values(payoff, pathset.s[:, K, :], pathset.x[:, K, :])
    if Y[:, K].size != M:
        raise UIPError("non-finite payoff samples on BSDE paths")
    drv_total = np.zeros(M)
    m_used = np.full(K, np.inf)
    bases = [None] * K
    zcoef = [None] * K
    for k in range(K - 1, -1, -1):
        dt = pathset.times[k + 1] - pathset.times[k]
        coords = _state_coords(model, pathset.s[:, k, :], pathset.x[:, k, :])
        basis = _make_basis(coords, exps)
        phi = basis.features(coords)
        y_next = Y[:, k + 1]
        c_y = _ridge_fit(phi, y_next, f"Y at step {k}")
        resid = y_next - phi @ c_y
        dw = pathset.increments[:, k, :]
        c_z = _ridge_fit(phi, resid[:, None] * dw / dt, f"Z at step {k}")
        z = phi @ c_z
        Z_S[:, k, :] = z[:, :n]
        Z_X[:, k, :] = z[:, n:]
        if gamma > 0 and d:
            zx = z[:, n:]
            if truncation == "auto":
                q = np.quantile(gamma * np.sqrt(np.sum(zx * zx, axis=1)), 0.999)
                m_k = 10.0 * q if q > 0 else np.inf
            else:
                m_k = float(truncation)
            m_used[k] = m_k
            drv, _ = kernels.hamiltonian_field(zx, gamma, m_k)
        else:
            drv = np.zeros(M)
        drv_total += sign * drv * dt
        c_y2 = _ridge_fit(phi, y_next - sign * drv * dt, f"Y at step {k}")
        Y[:, k] = phi @ c_y2
        bases[k] = basis
        zcoef[k] = c_z
    xi = Y[:, K] - drv_total
    y0 = float(np.mean(Y[:, 0]))
    se = float(np.std(xi, ddof=1) / np.sqrt(M))
    return BSDESolution(times=pathset.times, Y=Y, Z_S=Z_S, Z_X=Z_X, Y0=y0, Y0_se=se,
                        basis_spec={"kind": "total-degree monomials in (log s, x)", "degree": int(degree),
                                    "ridge": RIDGE, "size": int(exps.shape[0])},
                        gamma=float(gamma), side=side, m_auto=m_used, model=model, _bases=bases, _zcoef=zcoef)


# ---------------------------------------------------------------------------
# Malliavin weights
# ---------------------------------------------------------------------------

def _phi1_outer(alpha, dts):
    a = alpha[None, :] * dts[:, None]
    small = np.abs(a) < 1e-8
    safe = np.where(small, 1.0, alpha[None, :] + 0.0 * dts[:, None])
    return np.where(small, dts[:, None] * (1 - 0.5 * a), -np.expm1(-a) / safe)


def weight_process_N(model: MarketModel, paths: PathSet, t_index=0):
    """Discrete weights ``N_r`` for ``r = t_{i+1}, ..., t_K`` (``r = t_i`` is excluded).

    Traded block: ``diag(1/S_t) (sigma^{-1})' (W^S_r - W^S_t) / (r - t)``.
    Nontraded block: ``(r - t)^{-1} sum_u diag(c_u) (beta^{-1})' dW^X_u`` over the
    stored increments, with step weights ``c_u = e^{-alpha (u - t)}`` evaluated
    at the left point and corrected by ``alpha dt / (e^{alpha dt} - 1)`` so that
    the weight's covariance with ``X_r`` is exact on any grid. For ``alpha = 0``
    this is the plain left-point sum. Returns (paths, K - i, n + d).
    """
    if paths.measure != "Q0":
        raise ModelValidationError("Malliavin weights are defined along Q0 paths")
    i = int(t_index)
    if not 0 <= i < paths.n_steps:
        raise ModelValidationError("t_index must leave at least one later step")
    n, d = model.n, model.d
    t0 = paths.times[i]
    lags = paths.times[i + 1:] - t0
    out = np.empty((paths.n_paths, lags.size, n + d))
    if n:
        w = np.cumsum(paths.dW_s[:, i:, :], axis=1)
        ws = np.linalg.solve(model.sigma.T, w.reshape(-1, n).T).T.reshape(w.shape)
        out[:, :, :n] = ws / paths.s[:, i, None, :] / lags[None, :, None]
    if d:
        dts = np.diff(paths.times[i:])
        # e^{-alpha (u_{j+1} - t)} dt / kappa(alpha, dt): the left-point weight e^{-alpha (u_j - t)}
        # rescaled so that Cov(N_r, X_r) is exact for the OU transition
        kappa = _phi1_outer(model.alpha, dts)
        damp = np.exp(-np.outer(lags, model.alpha)) * dts[:, None] / kappa
        dwx = np.linalg.solve(model.beta, paths.dW_x[:, i:, :].reshape(-1, d).T).T.reshape(
            paths.n_paths, lags.size, d)
        out[:, :, n:] = np.cumsum(dwx * damp[None], axis=1) / lags[None, :, None]
    return out


@dataclass(frozen=True)
class WeightedGradient:
    estimate: np.ndarray
    se: np.ndarray
    paths_used: int

    @property
    def s_part(self):
        return self.estimate

    def within(self, target, n_se=3.0):
        return bool(np.all(np.abs(self.estimate - np.asarray(target)) <= n_se * self.se))


def malliavin_gradient(model: MarketModel, payoff: Payoff, gamma, state: State,
                       bsde: Optional[BSDESolution] = None, z_x: Optional[Callable] = None,
                       paths=200000, steps=32, seed=0, m=np.inf, chunk=CHUNK) -> WeightedGradient:
    """Estimate ``(phi_s, phi_x)`` at ``state`` without differentiating the payoff.

    ``phi_a = E0[(f - mean f) N_T - int h^m(Z^X_r) N_r dr]``. For ``gamma > 0``
    the control ``Z^X`` comes from ``bsde`` (fitted coefficients) or from a
    callable ``z_x(t, s, x) -> (m, d)``. The time integral is a right-endpoint
    rule that never touches the singular weight at ``r = t``: right endpoint on
    the first panel, trapezoid afterwards.
    """
    state.check(model)
    if gamma > 0 and model.d and bsde is None and z_x is None:
        raise ModelValidationError("gamma > 0 requires Z^X from a BSDE solution or a callable")
    times = bsde.times if bsde is not None else time_grid(state.t, model.T, steps)
    if bsde is not None and abs(times[0] - state.t) > 1e-12:
        raise ModelValidationError("the BSDE solution must start at the query time")
    dim = model.dim
    tot = np.zeros(dim)
    tot2 = np.zeros(dim)
    paths = int(paths)
    done = 0
    j = 0
    # first pass: mean payoff for centring (cheap terminal draws on the same seeds)
    fbar = None
    while done < paths:
        mj = min(chunk, paths - done)
        ps = simulate_paths(model, state, "Q0", steps=times.size - 1, paths=mj, seed=child_seed(seed, j),
                            times=times)
        N = weight_process_N(model, ps, 0)
        fT = payoff.func(ps.s[:, -1, :], ps.x[:, -1, :])
        if fbar is None:
            fbar = float(np.mean(fT))
        contrib = (fT - fbar)[:, None] * N[:, -1, :]
        if gamma > 0 and model.d:
            K = times.size - 1
            # right-endpoint weight on the first panel, trapezoid on the rest
            wts = np.zeros(K + 1)
            wts[1] += times[1] - times[0]
            for k in range(2, K + 1):
                wts[k - 1] += 0.5 * (times[k] - times[k - 1])
                wts[k] += 0.5 * (times[k] - times[k - 1])
            for k in range(1, K + 1):
                dt = wts[k]
                s_k, x_k = ps.s[:, k, :], ps.x[:, k, :]
                if bsde is not None:
                    zx = bsde.z_at(min(k, K - 1), s_k, x_k)[1]
                else:
                    zx = np.asarray(z_x(times[k], s_k, x_k), dtype=float).reshape(mj, model.d)
                h, _ = kernels.hamiltonian_field(zx, gamma, m)
                contrib -= (h - np.mean(h))[:, None] * N[:, k - 1, :] * dt
        tot += contrib.sum(axis=0)
        tot2 += (contrib**2).sum(axis=0)
        done += mj
        j += 1
    mean = tot / paths
    var = tot2 / paths - mean**2
    return WeightedGradient(mean, np.sqrt(np.maximum(var, 0.0) / (paths - 1)), paths)
