"""Optimal strategies from price gradients, hedged wealth and indifference checks.

Strategies are expressed as the value held in each traded asset, so that
wealth evolves as ``dV = pi' (mu dt + sigma dW^S)``. The hedge of a bought
claim is ``Delta = -diag(S) phi_s``; the pure-investment part is the Merton
vector ``(1/gamma) (sigma sigma')^{-1} mu``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ModelValidationError, UIPError
from .mc import BSDESolution
from .model import MarketModel, PathSet, State, merton_weights, simulate_paths, wealth_path
from .payoff import Payoff
from .pde import PriceSurface
from .rng import block_generator, child_seed

KINDS = ("claim", "investment", "hedge", "user")
WINSOR_Q = 1e-6


@dataclass
class StrategySpec:
    """Callable trading strategy ``(t, s (m, n), x (m, d)) -> values (m, n)``.

    ``kind`` is ``claim`` (hedge plus Merton), ``investment`` (Merton only),
    ``hedge`` (Delta only) or ``user`` (``func`` supplied directly).
    """

    kind: str
    model: MarketModel
    gamma: float
    source: object = None
    func: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelValidationError(f"strategy kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "user" and self.func is None:
            raise ModelValidationError("a user strategy needs func")
        if self.kind in ("claim", "investment") and not self.gamma > 0:
            raise ModelValidationError("the Merton term needs gamma > 0")

    @property
    def merton(self):
        return merton_weights(self.model, self.gamma)

    def delta(self, t, s, x):
        """Hedge ``Delta = -diag(s) phi_s`` from the source gradients."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        x = np.atleast_2d(np.asarray(x, dtype=float))
        m = max(s.shape[0], x.shape[0])
        if self.model.n == 0:
            return np.zeros((m, 0))
        src = self.source
        if isinstance(src, PriceSurface):
            phi_s, _ = src.gradient(t, s, x)
            return -s * phi_s
        if isinstance(src, BSDESolution):
            zs, _ = src.z_at(src.step_of(t), s, x)
            # Z^S = sigma' diag(S) phi_s
            return -np.linalg.solve(self.model.sigma.T, zs.T).T
        if callable(src):
            return -s * np.asarray(src(t, s, x), dtype=float).reshape(m, self.model.n)
        raise ModelValidationError("strategy source must be a PriceSurface, BSDESolution or gradient callable")

    def __call__(self, t, s, x):
        if self.kind == "user":
            return self.func(t, s, x)
        m = np.atleast_2d(s).shape[0] if self.model.n else np.atleast_2d(x).shape[0]
        out = np.zeros((m, self.model.n))
        if self.kind in ("claim", "hedge"):
            out = out + self.delta(t, s, x)
        if self.kind in ("claim", "investment"):
            out = out + self.merton
        return out


def optimal_strategy(source, model: MarketModel, gamma, kind="claim") -> StrategySpec:
    """Strategy from a buy-side price surface or BSDE solution."""
    side = getattr(source, "side", "buy")
    if side != "buy":
        raise ModelValidationError("optimal strategies are built from buy-side solutions")
    g_src = getattr(source, "gamma", gamma)
    if source is not None and not np.isclose(g_src, gamma):
        raise ModelValidationError(f"source solved with gamma={g_src}, strategy requested with gamma={gamma}")
    return StrategySpec(kind=kind, model=model, gamma=float(gamma), source=source)


def simulate_pnl(model: MarketModel, strategy: Callable, paths: PathSet, payoff: Optional[Payoff] = None,
                 charge=0.0, v=0.0):
    """Terminal ``V^{v - charge}_T(pi) + f`` (or ``V^v_T(pi)`` without a payoff) along ``paths``."""
    try:
        wealth = wealth_path(model, strategy, v - charge, paths)
    except ModelValidationError:
        raise
    except Exception as exc:  # strategy evaluation failure
        raise UIPError(f"strategy query failed: {exc}") from exc
    if payoff is not None:
        wealth = wealth + payoff.func(paths.s[:, -1, :], paths.x[:, -1, :])
    return wealth


def _utility(w, gamma):
    return -np.exp(-gamma * w)


def _winsorize(u, q=WINSOR_Q):
    lo = np.quantile(u, q)
    return np.maximum(u, lo), bool(np.any(u < lo))


@dataclass
class HedgeReport:
    price: float
    gamma: float
    paths: int
    steps: int
    eu_claim: float
    eu_plain: float
    se_claim: float
    se_plain: float
    gap: float
    gap_se: float
    gap_winsorized: float
    winsorized: bool
    probes: list = field(default_factory=list)
    wealth_claim: np.ndarray = field(default=None, repr=False)
    wealth_plain: np.ndarray = field(default=None, repr=False)

    @property
    def gap_z(self):
        return self.gap / self.gap_se if self.gap_se > 0 else 0.0

    @property
    def probe_max_improvement_z(self):
        return max((p["improvement_z"] for p in self.probes), default=0.0)

    def to_dict(self):
        keys = ("price", "gamma", "paths", "steps", "eu_claim", "eu_plain", "se_claim", "se_plain", "gap", "gap_se",
                "gap_winsorized", "winsorized", "probes")
        out = {k: getattr(self, k) for k in keys}
        out["schema_version"] = 1
        out["gap_z"] = self.gap_z
        return out

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, default=float)

    def histogram_csv(self, path, bins=100):
        lo = min(self.wealth_claim.min(), self.wealth_plain.min())
        hi = max(self.wealth_claim.max(), self.wealth_plain.max())
        edges = np.linspace(lo, hi, bins + 1)
        hc, _ = np.histogram(self.wealth_claim, edges)
        hp, _ = np.histogram(self.wealth_plain, edges)
        with open(path, "w") as fh:
            fh.write("left,right,claim,no_claim\n")
            for a, b, c, d in zip(edges[:-1], edges[1:], hc, hp):
                fh.write(f"{a:.17g},{b:.17g},{c},{d}\n")


def _perturbation(model, scale, rng):
    """Bounded smooth perturbation ``scale * tanh(c0 + c1 t + c2 log s + c3 x)`` of each holding."""
    c = rng.normal(size=(model.n, 2 + model.n + model.d))

    def func(t, s, x):
        feats = np.concatenate([np.ones((s.shape[0], 1)), np.full((s.shape[0], 1), t), np.log(s), x], axis=1)
        return scale * np.tanh(feats @ c.T)
    return func


def verify_indifference(model: MarketModel, payoff: Payoff, gamma, price, source, state: State, paths=200000,
                        steps=64, seed=0, probes=5, probe_scale=0.1, keep_wealth=False) -> HedgeReport:
    """Monte Carlo check of the indifference equation at charge ``price``.

    Both runs share one set of P-paths. The gap is
    ``E[U(V^{-p}(pi_f) + f)] - E[U(V^0(pi_0))]`` with the SE of the paired
    difference; exponential utility makes the starting capital irrelevant.
    Each probe adds a bounded random perturbation to the claim strategy and
    records the paired improvement of the claim-side expected utility.
    """
    if not gamma > 0:
        raise ModelValidationError("gamma must be positive")
    ps = simulate_paths(model, state, "P", steps=steps, paths=paths, seed=seed)
    pi_f = optimal_strategy(source, model, gamma, "claim") if source is not None else \
        StrategySpec("investment", model, gamma)
    pi_0 = StrategySpec("investment", model, gamma)
    w_f = simulate_pnl(model, pi_f, ps, payoff, charge=price)
    w_0 = simulate_pnl(model, pi_0, ps)
    u_f, u_0 = _utility(w_f, gamma), _utility(w_0, gamma)
    if not (np.all(np.isfinite(u_f)) and np.all(np.isfinite(u_0))):
        raise UIPError("utility overflow: wealth too negative for exponential utility")
    diff = u_f - u_0
    uf_w, flag_f = _winsorize(u_f)
    u0_w, flag_0 = _winsorize(u_0)
    rep = HedgeReport(price=float(price), gamma=float(gamma), paths=int(paths), steps=int(steps),
                      eu_claim=float(u_f.mean()), eu_plain=float(u_0.mean()),
                      se_claim=float(u_f.std(ddof=1) / np.sqrt(paths)), se_plain=float(u_0.std(ddof=1) / np.sqrt(paths)),
                      gap=float(diff.mean()), gap_se=float(diff.std(ddof=1) / np.sqrt(paths)),
                      gap_winsorized=float(uf_w.mean() - u0_w.mean()), winsorized=flag_f or flag_0)
    rng = block_generator(child_seed(seed, 99), 0)
    for j in range(probes):
        pert = _perturbation(model, probe_scale, rng)
        probe = StrategySpec("user", model, gamma, func=lambda t, s, x, p=pert: pi_f(t, s, x) + p(t, s, x))
        u_p = _utility(simulate_pnl(model, probe, ps, payoff, charge=price), gamma)
        d = u_p - u_f
        se = float(d.std(ddof=1) / np.sqrt(paths))
        rep.probes.append({"probe": j, "improvement": float(d.mean()), "se": se,
                           "improvement_z": float(d.mean() / se) if se > 0 else 0.0})
    if keep_wealth:
        rep.wealth_claim, rep.wealth_plain = w_f, w_0
    return rep
