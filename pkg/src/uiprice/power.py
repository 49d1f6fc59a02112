"""Two-fuel structural electricity model: forward prices, their gradients and the zeta correction.

Traded coordinates are the fuel spreads ``s = (s1, s2)``; nontraded
coordinates are ``x = (c1, c2, y)``: two capacities and the demand, each a
generalized OU process with its own independent driver. The forward pays

    f = g(c1 + c2 - y) (s1 + s2 1{y > c1}),

so that ``p0(t, a) = psi1(t, x) s1 + psi2(t, x) s2`` with

    psi_i(t, x) = E[g(C2_T + Z_T) chi_i(Z_T)],   Z_T = C1_T - D_T,

``chi_1 = 1`` and ``chi_2(z) = 1{z < 0}``. ``Z_T`` and ``C2_T`` are
independent Gaussians under the minimal martingale measure, and the
derivatives of ``psi_i`` follow by differentiating their means.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from .errors import ModelValidationError, QuadratureError
from .model import MarketModel, State, ou_affine, ou_conditional_moments
from .payoff import ScarcityFunction, constant_scarcity, make_forward_payoff, scarcity_power
from .quadrature import legendre_rule
from .rng import block_generator

WIDTH = 8.0
NODES = 64
CHECK_NODES = 96
REFINE_RTOL = 1e-6
T_GUARD = 1e-6
CONVENTIONS = ("correct", "as_printed")


@dataclass(frozen=True)
class PowerModel:
    """Two traded spreads and three nontraded factors ``(C1, C2, D)`` with diagonal ``beta``."""

    mu: np.ndarray
    sigma: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    T: float
    scarcity: ScarcityFunction
    heat_rates: tuple = (1.0, 1.0)
    b: Optional[np.ndarray] = None
    b_times: Optional[np.ndarray] = None
    name: str = "custom"

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim == 2:
            if np.any(np.abs(beta - np.diag(np.diag(beta))) > 0):
                raise ModelValidationError("power model: beta must be diagonal (independent nontraded drivers)")
            beta = np.diag(beta)
        if beta.shape != (3,) or np.any(beta <= 0):
            raise ModelValidationError("power model: beta needs three strictly positive entries")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float).reshape(3))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float).reshape(2))
        sig = np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "sigma", np.diag(sig) if sig.ndim == 1 else sig.reshape(2, 2))
        object.__setattr__(self, "market", MarketModel(mu=self.mu, sigma=self.sigma, alpha=self.alpha,
                                                       beta=np.diag(beta), T=self.T, b=self.b,
                                                       b_times=self.b_times))

    @property
    def payoff(self):
        return make_forward_payoff(self.scarcity, n_fuels=2)

    def capped_payoff(self, cap):
        return make_forward_payoff(self.scarcity, n_fuels=2, cap=cap)

    def to_dict(self):
        return {"name": self.name, "mu": self.mu.tolist(), "sigma": self.sigma.tolist(),
                "alpha": self.alpha.tolist(), "beta": self.beta.tolist(), "T": self.T,
                "heat_rates": list(self.heat_rates), "scarcity": self.scarcity.spec,
                "b": None if self.b is None else np.asarray(self.b).tolist(),
                "b_times": None if self.b_times is None else np.asarray(self.b_times).tolist()}


def aid_2fuel(scarcity: Optional[ScarcityFunction] = None) -> PowerModel:
    """Preset two-fuel model with zero seasonal drifts."""
    return PowerModel(mu=[0.05, 0.03], sigma=[0.3, 0.35], alpha=[1.0, 1.0, 2.0], beta=[0.2, 0.2, 0.3], T=1.0,
                      scarcity=scarcity_power(5.0, 1.0) if scarcity is None else scarcity,
                      heat_rates=(1.0, 1.5), name="aid-2fuel")


AID_2FUEL_STATE = State(0.0, [1.0, 0.5], [1.0, 0.8, 0.9])

PRESETS = {"aid-2fuel": aid_2fuel}


def preset(name) -> PowerModel:
    if name not in PRESETS:
        raise ModelValidationError(f"unknown power preset {name!r}; available: {sorted(PRESETS)}")
    return PRESETS[name]()


@dataclass
class PsiTable:
    """``psi`` (m, 2) and ``dpsi`` (m, 2, 3) with columns ``(C1, C2, D)`` at the rows of ``x``."""

    t: float
    x: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    quadrature: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "c1", "c2", "y", "psi1", "psi2"] +
                       [f"psi{i}_{j}" for i in (1, 2) for j in ("C1", "C2", "D")])
            for xr, p, dp in zip(self.x, self.psi, self.dpsi):
                w.writerow([f"{v:.17g}" for v in [self.t, *xr, *p, *dp.ravel()]])


def _terminal_moments(pm: PowerModel, t):
    """Affine maps ``m_z = az . x + bz`` and ``m_c = ac . x + bc`` plus ``(var_z, var_c)``."""
    decay, shift, cov = ou_affine(pm.market, t, pm.T)
    az = np.array([decay[0], 0.0, -decay[2]])
    ac = np.array([0.0, decay[1], 0.0])
    return az, shift[0] - shift[2], ac, shift[1], cov[0, 0] + cov[2, 2], cov[1, 1], decay


def _panels(lo, hi, breaks, k):
    """Gauss-Legendre nodes on ``[lo, hi]`` split at ``breaks`` (all arrays broadcast over rows)."""
    xk, wk = legendre_rule(k)
    edges = [lo] + [np.clip(b, lo, hi) for b in breaks] + [hi]
    edges = np.sort(np.stack(np.broadcast_arrays(*edges), axis=-1), axis=-1)
    a, b = edges[..., :-1], edges[..., 1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = mid[..., None] + half[..., None] * xk
    weights = half[..., None] * wk
    shape = nodes.shape[:-2] + (-1,)
    return nodes.reshape(shape), weights.reshape(shape)


def _psi_integrals(g: ScarcityFunction, mz, mc, sdz, sdc, k=NODES, width=WIDTH):
    """Integrals over ``Z ~ N(mz, sdz^2)`` and ``C ~ N(mc, sdc^2)`` of ``g(C + Z)`` times
    ``chi_i(Z)`` and the centred factors ``(Z - mz)`` or ``(C - mc)``.

    Returns a dict of (m,) arrays: ``p1, p2`` and ``z1, z2, c1, c2``.
    """
    mz = np.atleast_1d(np.asarray(mz, dtype=float))
    mc = np.atleast_1d(np.asarray(mc, dtype=float))
    m = mz.size
    lo, hi = np.full(m, -width), np.full(m, width)
    # outer panels in standardized z, split where Z crosses zero
    uz, wz = _panels(lo, hi, [-mz / sdz], k)
    wz = wz * norm.pdf(uz)
    z = mz[:, None] + sdz * uz
    neg = z < 0
    # inner panels in standardized c, split at each kink of g(c + z)
    kinks = [(kk - z - mc[:, None]) / sdc for kk in g.kinks]
    uc, wc = _panels(np.full(z.shape, -width), np.full(z.shape, width), kinks, k)
    wc = wc * norm.pdf(uc)
    gv = g(mc[:, None, None] + sdc * uc + z[..., None])
    inner = np.sum(wc * gv, axis=-1)
    inner_c = sdc * np.sum(wc * uc * gv, axis=-1)
    out = {"p1": np.sum(wz * inner, axis=1), "p2": np.sum(wz * inner * neg, axis=1),
           "z1": np.sum(wz * sdz * uz * inner, axis=1), "z2": np.sum(wz * sdz * uz * inner * neg, axis=1),
           "c1": np.sum(wz * inner_c, axis=1), "c2": np.sum(wz * inner_c * neg, axis=1)}
    return out


def _psi_from_means(pm, t, mz, mc, k=NODES, check=False):
    az, bz, ac, bc, vz, vc, decay = _terminal_moments(pm, t)
    if vz <= 0 or vc <= 0:
        raise ModelValidationError("conditional variances vanish; t must be below T")
    res = _psi_integrals(pm.scarcity, mz, mc, np.sqrt(vz), np.sqrt(vc), k)
    if check:
        fine = _psi_integrals(pm.scarcity, mz, mc, np.sqrt(vz), np.sqrt(vc), CHECK_NODES)
        scale = {"p": pm.scarcity.bound, "z": pm.scarcity.bound * np.sqrt(vz), "c": pm.scarcity.bound * np.sqrt(vc)}
        for key in res:
            diff = np.max(np.abs(res[key] - fine[key]))
            if diff > REFINE_RTOL * max(np.max(np.abs(fine[key])), 1e-3 * scale[key[0]]):
                raise QuadratureError(f"psi quadrature: {k} vs {CHECK_NODES} nodes differ by {diff:.3g} in {key}")
        res = fine
    psi = np.stack([res["p1"], res["p2"]], axis=-1)
    dpsi = np.empty(psi.shape + (3,))
    for i, key in enumerate(("1", "2")):
        dpsi[:, i, 0] = decay[0] / vz * res["z" + key]
        dpsi[:, i, 1] = decay[1] / vc * res["c" + key]
        dpsi[:, i, 2] = -decay[2] / vz * res["z" + key]
    return psi, dpsi


def _means(pm, t, x):
    az, bz, ac, bc, *_ = _terminal_moments(pm, t)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return x @ az + bz, x @ ac + bc


def psi_table(pm: PowerModel, t, x, k=NODES, check=True) -> PsiTable:
    """``psi`` and all derivatives at the rows of ``x`` (m, 3)."""
    if t > pm.T - T_GUARD:
        raise ModelValidationError(f"psi derivatives are singular at maturity; need t <= T - {T_GUARD:g}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mz, mc = _means(pm, t, x)
    psi, dpsi = _psi_from_means(pm, t, mz, mc, k, check)
    return PsiTable(t=float(t), x=x, psi=psi, dpsi=dpsi,
                    quadrature={"rule": "piecewise Gauss-Legendre", "nodes": k,
                                "check_nodes": CHECK_NODES if check else None, "width_sd": WIDTH})


def psi_derivatives(pm: PowerModel, t, x, k=NODES, check=True):
    """``(psi (m, 2), dpsi (m, 2, 3))`` with derivative columns ``(C1, C2, D)``."""
    tab = psi_table(pm, t, x, k, check)
    return tab.psi, tab.dpsi


def forward_p0(pm: PowerModel, state: State, k=NODES, check=True):
    """``p0 = psi1 s1 + psi2 s2`` at ``state``."""
    state.check(pm.market)
    if state.t >= pm.T:
        return float(pm.payoff.func(state.s, state.x))
    mz, mc = _means(pm, state.t, state.x)
    psi, _ = _psi_from_means(pm, state.t, mz, mc, k, check)
    return float(psi[0] @ state.s)


def forward_gradient(pm: PowerModel, state: State, k=NODES):
    """``(p0_s, p0_x)`` at ``state``."""
    tab = psi_table(pm, state.t, state.x[None, :], k)
    return tab.psi[0], state.s @ tab.dpsi[0]


def _sqrt_time_rule(t, T, k):
    x, w = legendre_rule(k)
    umax = np.sqrt(T - t)
    u = 0.5 * umax * (x + 1.0)
    return T - u**2, 0.5 * umax * w * 2 * u


def _outer_rule(Mz, Sz, Mc, Sc, sdz, stot, kinks, k, width=WIDTH, band=6.0):
    """Product rule for ``E[F(m_z, m_c)]`` with independent Gaussian means.

    The integrand has sharp features across ``m_z = 0`` (scale ``sdz``) and
    across ``m_z + m_c = kink`` (scale ``stot``), both narrow close to
    maturity. Integrating in ``(m_z, w = m_z + m_c)`` makes both features
    axis-aligned, so piecewise Gauss-Legendre panels can bracket them.
    """
    Sz, Sc = max(Sz, 1e-300), max(Sc, 1e-300)
    zb = [(-Mz + e * band * sdz) / Sz for e in (-1.0, 0.0, 1.0)]
    uz, wz = _panels(np.array([-width]), np.array([width]), [np.array([b]) for b in zb], k)
    uz, wz = uz[0], wz[0] * norm.pdf(uz[0])
    mz = Mz + Sz * uz
    wb = []
    for kk in kinks:
        wb += [(kk + e * band * stot - mz - Mc) / Sc for e in (-1.0, 0.0, 1.0)]
    uw, ww = _panels(np.full(mz.shape, -width), np.full(mz.shape, width), wb, k)
    ww = ww * norm.pdf(uw)
    mc = Mc + Sc * uw
    weights = wz[:, None] * ww
    return np.broadcast_to(mz[:, None], mc.shape).ravel(), mc.ravel(), weights.ravel()


def forward_zeta(pm: PowerModel, state: State, time_nodes=32, outer_nodes=12, convention="correct",
                 method="quadrature", paths=20000, seed=0, k=24):
    """``zeta(t, a)`` assembled as a quadratic form in ``(s1, s2)``.

    Returns a dict with the value and the coefficients ``(a11, a22, a12)`` of
    ``zeta = a11 s1^2 + a22 s2^2 + a12 s1 s2``. Under ``convention="correct"``
    the coefficients include the second moments of the spreads,
    ``E[S_i(r)^2] = s_i^2 e^{(sigma sigma')_ii (r - t)}``, and the cross term
    carries the factor ``2 e^{(sigma sigma')_12 (r - t)}``.
    ``convention="as_printed"`` uses ``e^{(sigma sigma')_ii (T - r)}`` and an
    unweighted cross term instead. The expectation over ``X_r`` is a
    piecewise Gauss-Legendre product rule on the conditional means of
    ``(Z_T, C2_T)`` (``method="quadrature"``) or plain Monte Carlo.
    """
    if convention not in CONVENTIONS:
        raise ModelValidationError(f"convention must be one of {CONVENTIONS}")
    state.check(pm.market)
    t0 = state.t
    rt, rw = _sqrt_time_rule(t0, pm.T, time_nodes)
    cov_s = pm.sigma @ pm.sigma.T
    b2 = pm.beta**2
    a11 = a22 = a12 = 0.0
    gen = block_generator(seed, 0)
    for r, wr in zip(rt, rw):
        az, bz, ac, bc, vz, vc, _ = _terminal_moments(pm, r)
        law = ou_conditional_moments(pm.market, t0, r, state.x)
        if method == "quadrature":
            mz, mc, wts = _outer_rule(law.mean @ az + bz, np.sqrt(az @ law.cov @ az), law.mean @ ac + bc,
                                      np.sqrt(ac @ law.cov @ ac), np.sqrt(vz), np.sqrt(vz + vc),
                                      pm.scarcity.kinks, outer_nodes)
        elif method == "mc":
            xs = law.mean + gen.standard_normal((paths, 3)) @ np.linalg.cholesky(law.cov + 1e-300 * np.eye(3)).T
            mz, mc = xs @ az + bz, xs @ ac + bc
            wts = np.full(paths, 1.0 / paths)
        else:
            raise ModelValidationError("method must be 'quadrature' or 'mc'")
        _, dpsi = _psi_from_means(pm, r, mz, mc, k)
        e11 = wts @ (dpsi[:, 0, :] ** 2 @ b2)
        e22 = wts @ (dpsi[:, 1, :] ** 2 @ b2)
        e12 = wts @ ((dpsi[:, 0, :] * dpsi[:, 1, :]) @ b2)
        if convention == "correct":
            el = r - t0
            a11 += wr * np.exp(cov_s[0, 0] * el) * e11
            a22 += wr * np.exp(cov_s[1, 1] * el) * e22
            a12 += wr * 2.0 * np.exp(cov_s[0, 1] * el) * e12
        else:
            a11 += wr * np.exp(cov_s[0, 0] * (pm.T - r)) * e11
            a22 += wr * np.exp(cov_s[1, 1] * (pm.T - r)) * e22
            a12 += wr * e12
    s1, s2 = state.s
    value = a11 * s1**2 + a22 * s2**2 + a12 * s1 * s2
    return {"zeta": float(value), "a11": float(a11), "a22": float(a22), "a12": float(a12),
            "convention": convention, "method": method, "time_nodes": time_nodes}


def forward_uip(pm: PowerModel, gamma, state: State, bsde=False, bsde_paths=200000, bsde_steps=32, degree=2,
                seed=0, convention="correct"):
    """First-order indifference price ``p0 - (gamma/2) zeta`` with optional BSDE cross-check."""
    if not gamma > 0:
        raise ModelValidationError("gamma must be positive")
    p0 = forward_p0(pm, state)
    z = forward_zeta(pm, state, convention=convention)
    rep = {"schema_version": 1, "gamma": float(gamma), "p0": p0, "zeta": z["zeta"],
           "zeta_terms": {k: z[k] for k in ("a11", "a22", "a12")}, "expansion": p0 - 0.5 * gamma * z["zeta"],
           "convention": convention}
    if bsde:
        from .mc import solve_bsde
        sol = solve_bsde(pm.market, pm.payoff, gamma, steps=bsde_steps, paths=bsde_paths, degree=degree, seed=seed,
                         state=state)
        rep["bsde"] = {"Y0": sol.Y0, "se": sol.Y0_se, "gap": rep["expansion"] - sol.Y0}
    return rep


def decomposition_csv(rep, path):
    rows = [("p0", rep["p0"]), ("zeta", rep["zeta"]), ("a11", rep["zeta_terms"]["a11"]),
            ("a22", rep["zeta_terms"]["a22"]), ("a12", rep["zeta_terms"]["a12"]), ("expansion", rep["expansion"])]
    if "bsde" in rep:
        rows += [("bsde_Y0", rep["bsde"]["Y0"]), ("bsde_se", rep["bsde"]["se"])]
    with open(path, "w") as fh:
        fh.write("quantity,value\n")
        for k, v in rows:
            fh.write(f"{k},{v:.17g}\n")


def unit_scarcity_model(pm: PowerModel) -> PowerModel:
    """Copy of ``pm`` with ``g = 1``."""
    return PowerModel(mu=pm.mu, sigma=pm.sigma, alpha=pm.alpha, beta=pm.beta, T=pm.T, scarcity=constant_scarcity(1.0),
                      heat_rates=pm.heat_rates, b=pm.b, b_times=pm.b_times, name=pm.name + "+g1")
