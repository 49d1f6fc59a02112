"""Small risk-aversion expansions and price bounds.

For small ``gamma`` the buy price expands as ``phi = p0 - (gamma/2) zeta + O(gamma^2)``
with ``zeta(t, a) = E0[int_t^T |beta' p0_x(r, A_r)|^2 dr]``. The gradients
expand as

    phi_x = e^{-alpha (T-t)} E0[f_x] - gamma e^{-alpha (T-t)} E0[f_x int beta' p0_x dW^X],
    phi_s = E0[f_s S_T/S_t] - gamma E0[f_s (S_T/S_t) int beta' p0_x dW^X].
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import HypothesisViolation, ModelValidationError, UIPError
from .model import MarketModel, State, ou_affine, simulate_paths
from .mc import price_mmm, terminal_law
from .payoff import DISCONTINUOUS, Payoff
from .quadrature import hermite_rule, legendre_rule, log_expectation_exp, tensor_points
from .rng import block_generator, child_seed, standard_normals

INNER_METHODS = ("closed-form", "malliavin", "fd", "quadrature")


@dataclass(frozen=True)
class Expansion:
    p0: float
    zeta: float
    gamma: float
    se_p0: float = 0.0
    se_zeta: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def price_estimate(self):
        return self.p0 - 0.5 * self.gamma * self.zeta

    @property
    def se(self):
        return float(np.hypot(self.se_p0, 0.5 * self.gamma * self.se_zeta))

    def to_dict(self):
        out = asdict(self)
        out["price_estimate"] = self.price_estimate
        out["expected_error"] = "O(gamma^2)"
        return out


def _sqrt_time_rule(t, T, k):
    """Gauss-Legendre nodes in ``u = sqrt(T - r)`` mapped to calendar times.

    Returns times (ascending) and weights for ``int_t^T g(r) dr``; the
    Jacobian ``2u`` absorbs the ``(T-r)^{-1/2}`` behaviour of gradient terms
    and no node sits on either endpoint.
    """
    x, w = legendre_rule(k)
    umax = np.sqrt(T - t)
    u = 0.5 * umax * (x + 1.0)
    wu = 0.5 * umax * w
    r = T - u**2
    order = np.argsort(r)
    return r[order], (wu * 2 * u)[order]


# ---------------------------------------------------------------------------
# inner gradient estimators of p0_x at many states
# ---------------------------------------------------------------------------

def _terminal_draws(model, t, s, x, z):
    """Exact ``(S_T, X_T)`` from states ``(s, x)`` (m, .) with normals ``z`` (m, k, n+d)."""
    n, d = model.n, model.d
    tau = model.T - t
    S = np.empty(z.shape[:2] + (n,))
    X = np.empty(z.shape[:2] + (d,))
    chol = None
    if n:
        drift = -0.5 * np.diag(model.cov_traded) * tau
        S = s[:, None, :] * np.exp(drift + np.sqrt(tau) * z[..., :n] @ model.sigma.T)
    if d:
        decay, shift, cov = ou_affine(model, t, model.T)
        chol = np.linalg.cholesky(cov + 1e-300 * np.eye(d))
        X = decay * x[:, None, :] + shift + z[..., n:] @ chol.T
    return S, X, chol


def _score_x(model, t, z, chol):
    """Gaussian score ``d/dx log density`` of ``X_T`` for the noise ``z``."""
    decay, _, _ = ou_affine(model, t, model.T)
    # Sigma^{-1} (X - m) with X - m = L z is L^{-T} z
    return decay * np.linalg.solve(chol.T, z[..., model.n:].reshape(-1, model.d).T).T.reshape(
        z.shape[:-1] + (model.d,))


def p0_x_malliavin(model, payoff, t, s, x, inner=1000, seed=0, split=True):
    """Weighted-estimator ``p0_x`` at rows of ``(s, x)``; optionally also two half-sample estimates."""
    m = s.shape[0] if model.n else x.shape[0]
    gen = block_generator(seed, 0)
    z = gen.standard_normal((m, inner, model.dim))
    S, X, chol = _terminal_draws(model, t, s, x, z)
    f = payoff.func(S, X)
    f = f - f.mean(axis=1, keepdims=True)
    w = _score_x(model, t, z, chol)
    g = f[..., None] * w
    full = g.mean(axis=1)
    if not split:
        return full
    h = inner // 2
    return full, g[:, :h].mean(axis=1), g[:, h:2 * h].mean(axis=1)


def p0_x_fd(model, payoff, t, s, x, inner=1000, seed=0, rel=1e-2):
    """Central difference of the inner Monte Carlo price with common random numbers."""
    gen = block_generator(seed, 0)
    z = gen.standard_normal((x.shape[0], inner, model.dim))
    decay, _, cov = ou_affine(model, t, model.T)
    step = rel * np.sqrt(np.maximum(np.diag(cov), 1e-300))
    out = np.empty(x.shape)
    halves = [np.empty(x.shape), np.empty(x.shape)]
    for j in range(model.d):
        e = np.zeros(model.d)
        e[j] = step[j]
        Sp, Xp, _ = _terminal_draws(model, t, s, x + e, z)
        Sm, Xm, _ = _terminal_draws(model, t, s, x - e, z)
        diff = (payoff.func(Sp, Xp) - payoff.func(Sm, Xm)) / (2 * step[j])
        out[:, j] = diff.mean(axis=1)
        h = inner // 2
        halves[0][:, j] = diff[:, :h].mean(axis=1)
        halves[1][:, j] = diff[:, h:2 * h].mean(axis=1)
    return out, halves[0], halves[1]


def p0_x_quadrature(model, payoff, t, s, x, k=32):
    """Gauss-Hermite ``p0_x`` at rows of ``(s, x)``; uses ``f_x`` when declared."""
    n, d = model.n, model.d
    z1, w1 = hermite_rule(k)
    grids = np.meshgrid(*([z1] * model.dim), indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.ones(z.shape[0])
    for g in np.meshgrid(*([w1] * model.dim), indexing="ij"):
        w = w * g.ravel()
    m = x.shape[0]
    zz = np.broadcast_to(z, (m,) + z.shape)
    S, X, chol = _terminal_draws(model, t, s, x, zz)
    if payoff.grad_x is not None and payoff.regularity != DISCONTINUOUS:
        decay, _, _ = ou_affine(model, t, model.T)
        gx = np.asarray(payoff.grad_x(S, X), dtype=float)
        return decay * np.einsum("k,mkj->mj", w, gx)
    f = payoff.func(S, X)
    sc = _score_x(model, t, zz, chol)
    return np.einsum("k,mk,mkj->mj", w, f, sc)


def _inner_gradients(method, model, payoff, t, s, x, inner, seed, closed_form, nodes):
    """Returns ``(estimate, product_of_halves)`` of ``p0_x`` and ``|beta' p0_x|^2``."""
    if method == "closed-form":
        g = np.asarray(closed_form(t, s, x), dtype=float).reshape(x.shape)
        q = g @ model.beta
        return g, np.sum(q * q, axis=1)
    if method == "quadrature":
        g = p0_x_quadrature(model, payoff, t, s, x, nodes)
        q = g @ model.beta
        return g, np.sum(q * q, axis=1)
    if method == "malliavin":
        g, a, b = p0_x_malliavin(model, payoff, t, s, x, inner, seed)
    elif method == "fd":
        g, a, b = p0_x_fd(model, payoff, t, s, x, inner, seed)
    else:
        raise ModelValidationError(f"unknown inner method {method!r}; choose from {INNER_METHODS}")
    qa, qb = a @ model.beta, b @ model.beta
    return g, np.sum(qa * qb, axis=1)


def zeta(model: MarketModel, payoff: Payoff, state: State, inner_method="malliavin", outer_paths=10000,
         inner_paths=1000, time_nodes=16, seed=0, closed_form: Optional[Callable] = None, nodes=16,
         chunk=256):
    """Nested Monte Carlo estimate of ``zeta(t, a)``.

    Outer paths are simulated exactly under Q0 at Gauss-Legendre times in
    ``sqrt(T - r)``. At every outer node the inner method estimates ``p0_x``;
    for the noisy methods the square ``|beta' p0_x|^2`` is replaced by the
    product of two independent half-sample estimates, which is unbiased.

    Returns ``(zeta, se_outer, se_inner)``.
    """
    state.check(model)
    if model.d == 0 or not payoff.depends_on_x:
        return 0.0, 0.0, 0.0
    if inner_method == "closed-form" and closed_form is None:
        raise ModelValidationError("closed-form inner method needs a callable p0_x(t, s, x)")
    rt, rw = _sqrt_time_rule(state.t, model.T, time_nodes)
    times = np.concatenate([[state.t], rt])
    if np.any(np.diff(times) <= 0):
        raise UIPError("degenerate time rule for zeta")
    ps = simulate_paths(model, state, "Q0", times=times, paths=outer_paths, seed=seed)
    per_path = np.zeros(outer_paths)
    noise = np.zeros(outer_paths)
    failures = 0
    for j, (r, w) in enumerate(zip(rt, rw)):
        for c0 in range(0, outer_paths, chunk):
            c1 = min(outer_paths, c0 + chunk)
            s_r, x_r = ps.s[c0:c1, j + 1, :], ps.x[c0:c1, j + 1, :]
            g, sq = _inner_gradients(inner_method, model, payoff, r, s_r, x_r, inner_paths,
                                     child_seed(seed, j, c0), closed_form, nodes)
            bad = ~np.isfinite(sq)
            failures += int(bad.sum())
            sq = np.where(bad, 0.0, sq)
            per_path[c0:c1] += w * sq
            q = g @ model.beta
            noise[c0:c1] += w * (np.sum(q * q, axis=1) - sq)
    if failures > 1e-3 * outer_paths * time_nodes:
        raise UIPError(f"inner gradient estimator failed on {failures} nodes")
    val = float(per_path.mean())
    se = float(per_path.std(ddof=1) / np.sqrt(outer_paths))
    se_inner = float(noise.std(ddof=1) / np.sqrt(outer_paths)) if inner_method in ("malliavin", "fd") else 0.0
    return val, se, se_inner


def zeta_quadrature(model: MarketModel, payoff: Payoff, state: State, time_nodes=32, outer_nodes=32,
                    inner_nodes=32):
    """Deterministic ``zeta`` for ``n + d <= 2``: Gauss-Hermite over ``A_r`` and inside ``p0_x``."""
    if model.dim > 2:
        raise ModelValidationError("zeta_quadrature supports n + d <= 2")
    state.check(model)
    if model.d == 0 or not payoff.depends_on_x:
        return 0.0
    rt, rw = _sqrt_time_rule(state.t, model.T, time_nodes)
    total = 0.0
    for r, w in zip(rt, rw):
        law = terminal_law(model.replace(T=r), state) if r > state.t else None
        pts, wts = tensor_points(law, outer_nodes)
        s_r = np.exp(pts[:, : model.n])
        x_r = pts[:, model.n:]
        g = p0_x_quadrature(model, payoff, r, s_r, x_r, inner_nodes)
        q = g @ model.beta
        total += w * float(wts @ np.sum(q * q, axis=1))
    return total


def _zeta_auto(model, payoff, state, **kw):
    if model.dim <= 2 and (payoff.smooth or payoff.regularity != DISCONTINUOUS):
        return zeta_quadrature(model, payoff, state), 0.0, "quadrature"
    z, se, _ = zeta(model, payoff, state, **kw)
    return z, se, kw.get("inner_method", "malliavin")


def expand_price(model: MarketModel, payoff: Payoff, gamma, state: State, zeta_method="auto", paths=100000,
                 seed=0, **zeta_kw) -> Expansion:
    """First-order expansion ``p0 - (gamma/2) zeta`` with both ingredients and their errors."""
    if gamma <= 0:
        raise ModelValidationError("expand_price needs gamma > 0")
    p0, se0 = price_mmm(model, payoff, state, paths=paths, seed=seed)
    if zeta_method == "auto":
        z, sez, used = _zeta_auto(model, payoff, state, seed=child_seed(seed, 1), **zeta_kw)
    elif zeta_method == "quadrature":
        z, sez, used = zeta_quadrature(model, payoff, state), 0.0, "quadrature"
    else:
        z, sez, _ = zeta(model, payoff, state, inner_method=zeta_method, seed=child_seed(seed, 1), **zeta_kw)
        used = zeta_method
    return Expansion(p0=p0, zeta=z, gamma=float(gamma), se_p0=se0, se_zeta=sez,
                     meta={"zeta_method": used, "order": "error O(gamma^2)"})


def expand_gradients(model: MarketModel, payoff: Payoff, gamma, state: State, paths=100000, steps=32,
                     seed=0, inner_paths=16, closed_form: Optional[Callable] = None):
    """First-order expansions of ``phi_x`` and ``phi_s`` by Monte Carlo.

    The stochastic integral ``int beta' p0_x dW^X`` is a left-point sum along
    Q0 paths; ``p0_x`` comes from ``closed_form(t, s, x)`` or from the
    zeroth-order representation ``e^{-alpha (T-r)} E0[f_x]`` with
    ``inner_paths`` fresh draws per node (its noise is independent of the
    later increments, so the estimator stays unbiased).

    Returns ``(phi_x, phi_s, se_x, se_s)``.
    """
    if payoff.grad_x is None or payoff.regularity == DISCONTINUOUS or not payoff.bounded_in_x:
        raise HypothesisViolation("the gradient expansion needs a declared, bounded payoff derivative f_x")
    if model.n and payoff.grad_s is None:
        raise HypothesisViolation("the gradient expansion needs a declared payoff derivative f_s")
    state.check(model)
    n, d = model.n, model.d
    ps = simulate_paths(model, state, "Q0", steps=steps, paths=paths, seed=seed)
    tau = model.T - state.t
    integral = np.zeros(paths)
    if gamma > 0 and d:
        for k in range(ps.n_steps):
            r = ps.times[k]
            s_r, x_r = ps.s[:, k, :], ps.x[:, k, :]
            if closed_form is not None:
                g = np.asarray(closed_form(r, s_r, x_r), dtype=float).reshape(paths, d)
            else:
                g = _p0x_fx(model, payoff, r, s_r, x_r, inner_paths, child_seed(seed, 7, k))
            integral += np.einsum("pj,pj->p", g @ model.beta, ps.dW_x[:, k, :])
    sT, xT = ps.s[:, -1, :], ps.x[:, -1, :]
    fx = np.asarray(payoff.grad_x(sT, xT), dtype=float).reshape(paths, d) if d else np.zeros((paths, 0))
    fs = np.asarray(payoff.grad_s(sT, xT), dtype=float).reshape(paths, n) if n else np.zeros((paths, 0))
    decay = np.exp(-model.alpha * tau)
    cx = decay * fx * (1.0 - gamma * integral)[:, None]
    cs = fs * (sT / state.s) * (1.0 - gamma * integral)[:, None]
    se = lambda a: a.std(axis=0, ddof=1) / np.sqrt(paths)  # noqa: E731
    return cx.mean(axis=0), cs.mean(axis=0), se(cx), se(cs)


def _p0x_fx(model, payoff, t, s, x, inner, seed):
    m = x.shape[0]
    z = block_generator(seed, 0).standard_normal((m, inner, model.dim))
    S, X, _ = _terminal_draws(model, t, s, x, z)
    decay, _, _ = ou_affine(model, t, model.T)
    return decay * np.asarray(payoff.grad_x(S, X), dtype=float).mean(axis=1)


def price_lower_bound(model: MarketModel, payoff: Payoff, gamma, state: State, paths=200000, seed=0, nodes=64):
    """``-(1/gamma) log E0[exp(-gamma f)]`` with a shifted log-sum-exp; returns ``(value, se)``."""
    if gamma <= 0:
        raise ModelValidationError("gamma must be positive")
    state.check(model)
    if model.dim <= 2:
        law = terminal_law(model, state)
        pts, wts = tensor_points(law, nodes)
        f = payoff.func(np.exp(pts[:, : model.n]), pts[:, model.n:])
        return -log_expectation_exp(-gamma * f, wts) / gamma, 0.0
    from .model import sample_terminal
    s, x, _, _ = sample_terminal(model, state, paths, seed=seed)
    lw = -gamma * payoff.func(s, x)
    if not np.all(np.isfinite(lw)):
        raise UIPError("exp(-gamma f) is not integrable on the sample")
    val = -log_expectation_exp(lw) / gamma
    w = np.exp(lw - lw.max())
    return val, float(np.std(w) / np.sqrt(paths) / np.mean(w) / gamma)


def bound_report(p_buy, p0, p_sell, tol=1e-4, se_buy=0.0, se0=0.0, se_sell=0.0, v1=None, v2=None):
    """Check ``v1 <= p_buy <= p0 <= p_sell <= v2`` and report the margins."""
    rows = []

    def add(name, lo, hi):
        margin = float(hi - lo)
        rows.append({"inequality": name, "lower": float(lo), "upper": float(hi), "margin": margin,
                     "pass": bool(margin >= -tol)})

    if v1 is not None:
        add("v1 <= p_buy", v1, p_buy)
    add("p_buy <= p0", p_buy, p0)
    add("p0 <= p_sell", p0, p_sell)
    if v2 is not None:
        add("p_sell <= v2", p_sell, v2)
    return {"schema_version": 1, "tolerance": tol, "rows": rows, "pass": all(r["pass"] for r in rows),
            "se": {"buy": se_buy, "p0": se0, "sell": se_sell},
            "v1": v1, "v2": v2}


def bound_report_json(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
