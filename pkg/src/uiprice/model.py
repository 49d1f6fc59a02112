"""Market model, exact simulation and Gaussian conditional laws.

Traded assets follow a multivariate geometric Brownian motion
``dS^i/S^i = mu_i dt + sigma_i. dW^S``; nontraded factors follow generalized
Ornstein-Uhlenbeck dynamics ``dX = (b(t) - alpha X) dt + beta dW^X`` driven by
an independent Brownian motion. Interest rates are zero.

Extension point: drift and volatility of ``S`` are constants here; a bounded
state-dependent ``mu(S), sigma(S)`` would enter through ``_traded_step``.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng
from .errors import ModelValidationError

MEASURES = ("P", "Q0", "Q")
COND_LIMIT = 1e10
SIMPSON_PANELS = 512


def _phi1(a, dt):
    """``int_0^dt exp(-a u) du`` with the analytic limit at ``a = 0``."""
    a = np.asarray(a, dtype=float)
    x = a * dt
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, a)
    return np.where(small, dt * (1.0 - 0.5 * x), -np.expm1(-x) / safe)


def _as_matrix(a, k, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0 or (a.ndim == 1 and k == 1 and a.size == 1):
        a = a.reshape(1, 1)
    elif a.ndim == 1 and a.size == k:
        a = np.diag(a)
    if a.shape != (k, k):
        raise ModelValidationError(f"{name} must be {k}x{k}, got shape {a.shape}")
    return a


def _check_invertible(a, name):
    if a.size == 0:
        return
    if not np.all(np.isfinite(a)):
        raise ModelValidationError(f"{name} has non-finite entries")
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ModelValidationError(f"{name} is numerically singular (condition number {cond:.3g})")


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Parameters of the traded / nontraded market.

    Parameters
    ----------
    mu : (n,) drift of the traded assets, per year.
    sigma : (n, n) volatility matrix, per sqrt-year. Must be invertible.
    alpha : (d,) mean-reversion rates, any sign.
    beta : (d, d) nontraded volatility matrix. Must be invertible.
    T : horizon in years.
    b : constant drift vector (d,), or tabulated values (K, d) at ``b_times``
        interpolated piecewise-linearly.
    """

    mu: np.ndarray
    sigma: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    T: float
    b: np.ndarray = None
    b_times: Optional[np.ndarray] = None

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float)).ravel()
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float)).ravel()
        n, d = mu.size, alpha.size
        sigma = _as_matrix(self.sigma, n, "sigma") if n else np.zeros((0, 0))
        beta = _as_matrix(self.beta, d, "beta") if d else np.zeros((0, 0))
        T = float(self.T)
        if not T > 0:
            raise ModelValidationError(f"horizon T must be positive, got {T}")
        if n + d < 1:
            raise ModelValidationError("model needs at least one traded or nontraded asset")
        _check_invertible(sigma, "sigma")
        _check_invertible(beta, "beta")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(alpha))):
            raise ModelValidationError("mu and alpha must be finite")
        b = np.zeros(d) if self.b is None else np.asarray(self.b, dtype=float)
        b_times = None if self.b_times is None else np.asarray(self.b_times, dtype=float).ravel()
        if b_times is None:
            b = np.atleast_1d(b).ravel()
            if b.size != d:
                raise ModelValidationError(f"b must have length d={d}, got {b.size}")
        else:
            b = b.reshape(b_times.size, d)
            if b_times.size < 2 or np.any(np.diff(b_times) <= 0):
                raise ModelValidationError("b_times must be strictly increasing with >= 2 entries")
        if not np.all(np.isfinite(b)):
            raise ModelValidationError("b must be finite (bounded)")
        for name, val in (("mu", mu), ("sigma", sigma), ("alpha", alpha), ("beta", beta),
                          ("T", T), ("b", b), ("b_times", b_times)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.mu.size

    @property
    def d(self) -> int:
        return self.alpha.size

    @property
    def dim(self) -> int:
        return self.n + self.d

    @property
    def b_constant(self) -> bool:
        return self.b_times is None

    def b_at(self, t):
        """Drift ``b(t)``; ``t`` scalar gives (d,), an array gives (len(t), d)."""
        t_arr = np.asarray(t, dtype=float)
        if self.b_times is None:
            return np.broadcast_to(self.b, t_arr.shape + (self.d,)).copy()
        cols = [np.interp(t_arr, self.b_times, self.b[:, i]) for i in range(self.d)]
        return np.stack(cols, axis=-1) if cols else np.zeros(t_arr.shape + (0,))

    @property
    def cov_traded(self):
        return self.sigma @ self.sigma.T

    @property
    def cov_nontraded(self):
        return self.beta @ self.beta.T

    def to_dict(self):
        out = {
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "T": self.T,
        }
        if self.b_times is None:
            out["b"] = self.b.tolist()
        else:
            out["b"] = {"times": self.b_times.tolist(), "values": self.b.tolist()}
        return out

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **changes):
        kw = dict(mu=self.mu, sigma=self.sigma, alpha=self.alpha, beta=self.beta, T=self.T,
                  b=self.b, b_times=self.b_times)
        kw.update(changes)
        return MarketModel(**kw)


@dataclass(frozen=True, eq=False)
class State:
    """A point ``(t, s, x)`` of the state space."""

    t: float
    s: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.s, dtype=float)).ravel()
        x = np.atleast_1d(np.asarray(self.x, dtype=float)).ravel()
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ModelValidationError("traded prices must be strictly positive and finite")
        if not np.all(np.isfinite(x)):
            raise ModelValidationError("nontraded levels must be finite")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))

    def check(self, model: MarketModel):
        if self.s.size != model.n or self.x.size != model.d:
            raise ModelValidationError(
                f"state has (n, d)=({self.s.size}, {self.x.size}), model has ({model.n}, {model.d})")
        if not (0.0 <= self.t <= model.T):
            raise ModelValidationError(f"state time {self.t} outside [0, {model.T}]")
        return self

    @property
    def a(self):
        return np.concatenate([self.s, self.x])


@dataclass(frozen=True, eq=False)
class GaussianLaw:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.shape[-1],) * 2:
            raise ModelValidationError("covariance shape does not match mean")
        if cov.size and np.max(np.abs(cov - cov.T)) > 1e-12 * max(1.0, np.max(np.abs(cov))):
            raise ModelValidationError("covariance is not symmetric")
        if cov.size and np.min(np.linalg.eigvalsh(cov)) < -1e-12:
            raise ModelValidationError("covariance is not positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def std(self):
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))


def market_price_of_risk(model: MarketModel):
    """``theta = sigma^{-1} mu``."""
    if model.n == 0:
        return np.zeros(0)
    _check_invertible(model.sigma, "sigma")
    return np.linalg.solve(model.sigma, model.mu)


def merton_weights(model: MarketModel, gamma):
    """Value held by the no-claim exponential-utility investor, ``(sigma sigma')^{-1} mu / gamma``."""
    if model.n == 0:
        return np.zeros(0)
    return np.linalg.solve(model.cov_traded, model.mu) / gamma


def _drift_integral(model, t, T):
    """``int_t^T exp(-alpha (T-u)) b(u) du`` per coordinate."""
    dt = T - t
    if model.d == 0 or dt == 0.0:
        return np.zeros(model.d)
    if model.b_constant:
        return model.b * _phi1(model.alpha, dt)
    u = np.linspace(t, T, 2 * SIMPSON_PANELS + 1)
    vals = np.exp(-np.outer(T - u, model.alpha)) * model.b_at(u)
    w = np.ones(u.size)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (dt / (6.0 * SIMPSON_PANELS)) * (w @ vals)


def ou_affine(model: MarketModel, t, T):
    """Exact affine map of the OU transition from ``t`` to ``T``.

    Returns ``(decay, shift, cov)`` with ``X_T = decay * X_t + shift + noise``,
    ``noise ~ N(0, cov)``.
    """
    dt = float(T) - float(t)
    decay = np.exp(-model.alpha * dt)
    shift = _drift_integral(model, float(t), float(T))
    asum = model.alpha[:, None] + model.alpha[None, :]
    cov = model.cov_nontraded * _phi1(asum, dt)
    cov = 0.5 * (cov + cov.T)
    return decay, shift, cov


def ou_conditional_moments(model: MarketModel, t, T, x) -> GaussianLaw:
    """Exact Gaussian law of ``X_T`` given ``X_t = x``."""
    if t > T:
        raise ModelValidationError(f"need t <= T, got t={t}, T={T}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    decay, shift, cov = ou_affine(model, t, T)
    return GaussianLaw(decay * x + shift, cov)


def log_traded_moments(model: MarketModel, t, T, s, measure="Q0"):
    """Gaussian law of ``log S_T`` given ``S_t = s``."""
    dt = float(T) - float(t)
    c = model.cov_traded
    drift = (model.mu if measure == "P" else 0.0) - 0.5 * np.diag(c)
    return GaussianLaw(np.log(np.asarray(s, dtype=float)) + drift * dt, c * dt)


@dataclass(eq=False)
class PathSet:
    """Simulated paths of ``A = (S, X)``.

    ``states`` is (paths, steps+1, n+d); ``increments`` is (paths, steps, n+d)
    holding the Brownian increments of the measure the paths were drawn under
    (``W^S`` under P, ``W^{S,0}`` under Q0 and Q, and ``W^X`` resp. ``W^{X,Q}``).
    """

    times: np.ndarray
    states: np.ndarray
    increments: np.ndarray
    measure: str
    seed: int
    n: int
    d: int
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.states.shape[0]

    @property
    def n_steps(self):
        return self.times.size - 1

    @property
    def s(self):
        return self.states[:, :, : self.n]

    @property
    def x(self):
        return self.states[:, :, self.n:]

    @property
    def dW_s(self):
        return self.increments[:, :, : self.n]

    @property
    def dW_x(self):
        return self.increments[:, :, self.n:]

    @property
    def dt(self):
        return np.diff(self.times)

    def to_csv(self, path, max_paths=None):
        m = self.n_paths if max_paths is None else min(max_paths, self.n_paths)
        header = ["path", "step", "time"] + [f"s{i + 1}" for i in range(self.n)] + [
            f"x{j + 1}" for j in range(self.d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for p in range(m):
                for k, tk in enumerate(self.times):
                    w.writerow([p, k, f"{tk:.17g}"] + [f"{v:.17g}" for v in self.states[p, k]])


def time_grid(t0, T, steps, kind="uniform"):
    """Simulation grid from ``t0`` to ``T``.

    ``kind="sqrt"`` clusters nodes near ``T`` (uniform in ``sqrt(T - t)``),
    which suits integrands with an integrable ``(T-t)^{-1/2}`` singularity.
    """
    if steps < 1:
        raise ModelValidationError("need at least one time step")
    u = np.linspace(0.0, 1.0, steps + 1)
    if kind == "uniform":
        return t0 + (T - t0) * u
    if kind == "sqrt":
        return T - (T - t0) * (1.0 - u) ** 2
    raise ModelValidationError(f"unknown time grid kind {kind!r}")


def _exact_noise_root(alpha, dt):
    """Square root of the covariance of ``(dW_j, I_1j, ..., I_dj)``.

    ``I_ij = int exp(-alpha_i (t+dt-u)) dW_j(u)`` over one step; the law is
    the same for every driving component ``j``.
    """
    d = alpha.size
    c = np.empty((d + 1, d + 1))
    c[0, 0] = dt
    c[0, 1:] = c[1:, 0] = _phi1(alpha, dt)
    c[1:, 1:] = _phi1(alpha[:, None] + alpha[None, :], dt)
    w, v = np.linalg.eigh(c)
    return v * np.sqrt(np.clip(w, 0.0, None))


def simulate_paths(model: MarketModel, start: State, measure="P", control: Optional[Callable] = None,
                   steps=64, paths=1000, seed=0, antithetic=False, times=None, threads=1) -> PathSet:
    """Simulate ``paths`` trajectories of ``A = (S, X)`` from ``start``.

    Traded assets use the exact lognormal step with drift ``mu`` under P and
    zero under Q0 / Q. Nontraded assets use the exact OU transition (jointly
    with their Brownian increments) under P and Q0; under the controlled
    measure ``Q`` the drift gains ``beta delta(t, s, x)`` and the step is
    Euler-Maruyama.

    ``control(t, s, x)`` receives arrays of shape (m, n) and (m, d) and must
    return (m, d).
    """
    if measure not in MEASURES:
        raise ModelValidationError(f"invalid measure tag {measure!r}; expected one of {MEASURES}")
    if (measure == "Q") != (control is not None):
        raise ModelValidationError("a control is required under Q and only under Q")
    start.check(model)
    if int(paths) < 1:
        raise ModelValidationError("need at least one path")
    paths = int(paths)
    times = time_grid(start.t, model.T, int(steps)) if times is None else np.asarray(times, dtype=float)
    K = times.size - 1
    n, d = model.n, model.d
    dts = np.diff(times)
    if np.any(dts <= 0):
        raise ModelValidationError("time grid must be strictly increasing")

    exact_x = measure != "Q"
    width = n + (d * (d + 1) if exact_x else d)
    drift_s = (model.mu if measure == "P" else np.zeros(n)) - 0.5 * np.diag(model.cov_traded)
    roots = [_exact_noise_root(model.alpha, h) for h in dts] if (exact_x and d) else None
    affine = [ou_affine(model, times[k], times[k + 1]) for k in range(K)] if d else None

    states = np.empty((paths, K + 1, n + d))
    incs = np.empty((paths, K, n + d))
    a0 = np.concatenate([start.s, start.x])
    states[:, 0, :] = a0

    slices = rng.block_slices(paths)

    def run(j):
        sl = slices[j]
        m = sl.stop - sl.start
        gen = rng.block_generator(seed, j)
        if antithetic:
            half = (m + 1) // 2
            zh = gen.standard_normal((half, K, width))
            z = np.concatenate([zh, -zh[: m - half]], axis=0)
        else:
            z = gen.standard_normal((m, K, width))
        logs = np.log(np.broadcast_to(start.s, (m, n))).copy()
        x = np.broadcast_to(start.x, (m, d)).copy()
        for k in range(K):
            h = dts[k]
            zk = z[:, k, :]
            if n:
                dws = np.sqrt(h) * zk[:, :n]
                logs = logs + drift_s * h + dws @ model.sigma.T
                incs[sl, k, :n] = dws
            if d:
                if exact_x:
                    u = zk[:, n:].reshape(m, d, d + 1) @ roots[k].T
                    dwx = u[:, :, 0]
                    integ = u[:, :, 1:]  # integ[p, j, i] = I_ij
                    decay, shift, _ = affine[k]
                    x = decay * x + shift + np.einsum("ij,pji->pi", model.beta, integ)
                else:
                    dwx = np.sqrt(h) * zk[:, n:]
                    s_now = np.exp(logs)
                    delta = np.asarray(control(times[k], s_now, x), dtype=float).reshape(m, d)
                    if not np.all(np.isfinite(delta)):
                        raise ModelValidationError(f"control returned non-finite values at t={times[k]}")
                    drift_x = model.b_at(times[k]) - model.alpha * x + delta @ model.beta.T
                    x = x + drift_x * h + dwx @ model.beta.T
                incs[sl, k, n:] = dwx
            states[sl, k + 1, :n] = np.exp(logs)
            states[sl, k + 1, n:] = x

    if threads and threads > 1 and len(slices) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(len(slices))))
    else:
        for j in range(len(slices)):
            run(j)
    return PathSet(times=times, states=states, increments=incs, measure=measure, seed=int(seed),
                   n=n, d=d, meta={"antithetic": bool(antithetic)})


def sample_terminal(model: MarketModel, state: State, paths, seed=0, measure="Q0", antithetic=False):
    """Exact draws of ``(S_T, X_T)`` from ``state`` without intermediate steps.

    Also returns the Gaussian scores ``w_s, w_x`` whose products with a payoff
    average to the gradient of its price (likelihood-ratio weights, i.e. the
    conditional expectation of the Malliavin weight given ``A_T``).
    """
    state.check(model)
    n, d = model.n, model.d
    tau = model.T - state.t
    if tau <= 0:
        raise ModelValidationError("state is at the horizon; nothing to sample")
    z = rng.standard_normals(seed, paths, (n + d,), antithetic=antithetic)
    out_s = np.empty((paths, n))
    w_s = np.empty((paths, n))
    if n:
        drift = (model.mu if measure == "P" else 0.0) - 0.5 * np.diag(model.cov_traded)
        dw = np.sqrt(tau) * z[:, :n]
        out_s = state.s * np.exp(drift * tau + dw @ model.sigma.T)
        # d/ds_j of log density: ((sigma^{-1})' dW)_j / (s_j tau)
        w_s = np.linalg.solve(model.sigma.T, dw.T).T / (state.s * tau)
    out_x = np.empty((paths, d))
    w_x = np.empty((paths, d))
    if d:
        decay, shift, cov = ou_affine(model, state.t, model.T)
        chol = np.linalg.cholesky(cov + 1e-300 * np.eye(d))
        noise = z[:, n:] @ chol.T
        out_x = decay * state.x + shift + noise
        w_x = decay * np.linalg.solve(cov, noise.T).T
    return out_s, out_x, w_s, w_x


def wealth_path(model: MarketModel, strategy: Callable, v, paths: PathSet):
    """Terminal wealth ``v + sum_k pi(t_k)' (mu dt + sigma dW^S_k)`` per path.

    ``strategy(t, s, x)`` returns the value held in each traded asset, shape (m, n).
    """
    if paths.measure != "P":
        raise ModelValidationError("wealth must be computed along P-paths")
    if paths.n != model.n or paths.d != model.d:
        raise ModelValidationError("path set dimensions do not match the model")
    m = paths.n_paths
    out = np.full(m, float(v))
    if model.n == 0:
        return out
    for k in range(paths.n_steps):
        h = paths.times[k + 1] - paths.times[k]
        pi = np.asarray(strategy(paths.times[k], paths.s[:, k, :], paths.x[:, k, :]), dtype=float)
        pi = np.broadcast_to(pi, (m, model.n)) if pi.ndim < 2 else pi
        if pi.shape != (m, model.n):
            raise ModelValidationError(f"strategy returned shape {pi.shape}, expected {(m, model.n)}")
        out += pi @ model.mu * h + np.einsum("pi,ij,pj->p", pi, model.sigma, paths.dW_s[:, k, :])
    return out
