"""Acceptance suite: eleven oracle and property checks at desk scale.

Each ``criterion_k`` returns a :class:`CriterionResult` with the measured
quantities, the tolerance used and the runtime. ``run_all`` evaluates every
criterion and ``format_line`` renders the one-line PASS/FAIL summary.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import cases
from . import payoff as P
from . import pde, power
from .asymptotics import price_lower_bound, zeta_quadrature
from .hedging import optimal_strategy, verify_indifference
from .mc import malliavin_gradient, price_mmm, solve_bsde
from .model import State, ou_conditional_moments, simulate_paths
from . import asymptotics

SOLVER_TOL = 1e-8


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    runtime: float = 0.0
    budget: float = float("inf")

    @property
    def within_budget(self):
        return self.runtime <= self.budget

    def to_dict(self):
        return {"number": self.number, "title": self.title, "passed": self.passed, "runtime": self.runtime,
                "budget": self.budget, "metrics": _jsonable(self.metrics)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def format_line(res: CriterionResult):
    status = "PASS" if res.passed else "FAIL"
    budget = "" if res.budget == float("inf") else f" (budget {res.budget:.0f} s)"
    return f"criterion {res.number:2d} {status}: {res.title} [{res.runtime:.1f} s{budget}]"


def _timed(number, title, budget, body):
    t0 = time.perf_counter()
    passed, metrics = body()
    runtime = time.perf_counter() - t0
    # the runtime budget is part of each criterion
    return CriterionResult(number, title, bool(passed) and runtime <= budget, metrics, runtime, budget)


# ---------------------------------------------------------------------------

def criterion_1():
    """Complete-market reduction against Black-Scholes."""
    def body():
        model = cases.call_model()
        strike = 1.0
        f = P.call(1, 1, strike)
        st = State(0.0, [1.0], [0.0])
        grid = pde.build_grid(model, st, pde.GridSpec(nodes=(201, 21), steps=64))
        surf = pde.solve_uip_pde(model, f, 0.5, grid)
        hedge = optimal_strategy(surf, model, 0.5, kind="hedge")
        spots = np.linspace(0.8, 1.2, 9)
        rel_p, rel_d = [], []
        for s in spots:
            v = surf.value(0.0, [[s]], [[0.0]])[0]
            bs, delta = pde.black_scholes_call(s, strike, 0.25, 1.0)
            rel_p.append(abs(v / bs - 1))
            value_delta = -s * delta
            rel_d.append(abs(hedge(0.0, np.array([[s]]), np.array([[0.0]]))[0, 0] / value_delta - 1))
        ok = max(rel_p) <= 5e-3 and max(rel_d) <= 1e-2
        return ok, {"max_rel_price_err": max(rel_p), "max_rel_delta_err": max(rel_d), "spots": spots}
    return _timed(1, "complete-market reduction", 30, body)


def criterion_2():
    """Certainty-equivalent reduction for an x-only payoff."""
    def body():
        model = cases.nontraded_model()
        f = P.tanh_x(0, 1, offset=1.0)
        x0 = 0.3
        st = State(0.0, [], [x0])
        grid = pde.build_grid(model, st, pde.GridSpec(nodes=201, steps=4))
        rel = {}
        for gamma in (0.25, 1.0, 4.0):
            v = pde.solve_uip_pde(model, f, gamma, grid).at_spot(st)
            ce, _ = pde.certainty_equivalent(model, f, gamma, 0.0, [x0])
            rel[gamma] = abs(v / ce - 1)
        return max(rel.values()) <= 1e-3, {"rel_err": rel}
    return _timed(2, "certainty-equivalent reduction", 10, body)


def criterion_3():
    """Burgers gradient oracle for a digital payoff."""
    def body():
        gamma, beta = 1.0, 1.0
        model = cases.burgers_model(beta)
        st = State(0.0, [], [0.0])
        grid = pde.build_grid(model, st, pde.GridSpec(nodes=400, steps=400))
        surf = pde.solve_uip_pde(model, P.digital(0, 1), gamma, grid)
        C = pde.burgers_bound_constant(gamma, beta)
        errs, bound_ok = {}, True
        x = grid.axes[0]
        for te in (0.1, 0.5, 1.0):
            k = int(np.argmin(np.abs(grid.times - (model.T - te))))
            elapsed = model.T - grid.times[k]
            mask = np.abs(x) <= 2 * beta * np.sqrt(elapsed)
            ref = pde.burgers_reference(elapsed, x[mask], gamma, beta)
            errs[te] = float(np.max(np.abs(surf.gradients(k)[1][mask, 0] - ref)))
            dense = np.linspace(-10, 10, 4001)
            bound_ok &= bool(np.all(pde.burgers_reference(elapsed, dense, gamma, beta) <= C / np.sqrt(elapsed)))
        return max(errs.values()) <= 1e-2 and bound_ok, {"max_abs_err": errs, "bound_holds": bound_ok, "C": C}
    return _timed(3, "Burgers gradient oracle", 60, body)


def criterion_4(paths=50000, steps=16, degree=2):
    """Bound chain ``p_buy <= p0 <= p_sell`` on common paths."""
    def body():
        setups = {"spread_call": (cases.spread_model(), P.make_spread_call(1.5, [1.0, 1.0], d=1),
                                  cases.spread_state())}
        pm = power.aid_2fuel()
        setups["capped_forward"] = (pm.market, pm.capped_payoff(4.0), power.AID_2FUEL_STATE)
        margins = {}
        ok = True
        for name, (model, f, st) in setups.items():
            ps = simulate_paths(model, st, "Q0", steps=steps, paths=paths, seed=4)
            p0 = float(np.mean(f.func(ps.s[:, -1, :], ps.x[:, -1, :])))
            for gamma in (0.1, 0.5, 1.0):
                b = solve_bsde(model, f, gamma, "buy", degree=degree, pathset=ps).Y0
                s = solve_bsde(model, f, gamma, "sell", degree=degree, pathset=ps).Y0
                rep = asymptotics.bound_report(b, p0, s, tol=1e-4)
                margins[f"{name}@{gamma}"] = [r["margin"] for r in rep["rows"]]
                ok &= rep["pass"]
        return ok, {"margins": margins}
    return _timed(4, "bound chain", 120, body)


def criterion_5():
    """Buy/sell symmetry ``p_sell(f) = -p_buy(-f)``."""
    def body():
        model, st, f = cases.benchmark_model(), cases.benchmark_state(), cases.benchmark_payoff()
        grid = pde.build_grid(model, st, pde.GridSpec(nodes=(121, 121), steps=16))
        ps = pde.solve_uip_pde(model, f, 0.5, grid, side="sell").at_spot(st)
        pb = pde.solve_uip_pde(model, f.negated(), 0.5, grid, side="buy").at_spot(st)
        gap = abs(ps + pb)
        return gap <= 2 * SOLVER_TOL * max(1.0, abs(ps)), {"p_sell": ps, "p_buy_neg": pb, "gap": gap}
    return _timed(5, "buy/sell symmetry", float("inf"), body)


def _benchmark_surface(gamma, nodes=161, steps=64, n_sd=5.0):
    model, st, f = cases.benchmark_model(), cases.benchmark_state(), cases.benchmark_payoff()
    grid = pde.build_grid(model, st, pde.GridSpec(nodes=(nodes, nodes), steps=steps, n_sd=n_sd))
    return pde.solve_uip_pde(model, f, gamma, grid)


def criterion_6():
    """PDE versus BSDE on the smooth benchmark."""
    def body():
        model, st, f = cases.benchmark_model(), cases.benchmark_state(), cases.benchmark_payoff()
        v = _benchmark_surface(0.5).at_spot(st)
        sol = solve_bsde(model, f, 0.5, steps=64, paths=100000, degree=3, state=st, seed=1)
        rel = abs(sol.Y0 / v - 1)
        z = abs(sol.Y0 - v) / sol.Y0_se
        return rel <= 1e-2 and z <= 3, {"pde": v, "bsde": sol.Y0, "se": sol.Y0_se, "rel": rel, "z": z}
    return _timed(6, "PDE-BSDE cross-validation", 120, body)


def criterion_7():
    """Malliavin-weight gradients against analytic and PDE gradients."""
    def body():
        model, st = cases.benchmark_model(), cases.benchmark_state()
        thr = 0.5
        dig = P.digital(1, 1, threshold=thr)
        wg0 = malliavin_gradient(model, dig, 0.0, st, paths=200000, steps=16, seed=3)
        law = ou_conditional_moments(model, 0.0, model.T, st.x)
        sd = float(law.std[0])
        exact_x = np.exp(-model.alpha[0] * model.T) * norm.pdf((law.mean[0] - thr) / sd) / sd
        ok0 = wg0.within([0.0, exact_x])
        f = cases.benchmark_payoff()
        surf = _benchmark_surface(0.5)
        gs, gx = surf.gradient(0.0, st.s[None], st.x[None])
        target = np.array([gs[0, 0], gx[0, 0]])
        sol = solve_bsde(model, f, 0.5, steps=32, paths=100000, degree=3, state=st, seed=1)
        wg = malliavin_gradient(model, f, 0.5, st, bsde=sol, paths=1000000, seed=5)
        rel = np.abs(wg.estimate / target - 1)
        return ok0 and bool(np.all(rel <= 2e-2)), {
            "gamma0_estimate": wg0.estimate, "gamma0_se": wg0.se, "gamma0_exact_x": exact_x,
            "gamma05_estimate": wg.estimate, "gamma05_se": wg.se, "pde_gradient": target, "rel_err": rel}
    return _timed(7, "Malliavin-weight gradients", float("inf"), body)


def richardson_price(gamma, coarse=81, fine=161, steps=4):
    """Grid-extrapolated PDE price at the benchmark spot (second-order spatial error removed)."""
    st = cases.benchmark_state()
    a = _benchmark_surface(gamma, coarse, steps).at_spot(st)
    b = _benchmark_surface(gamma, fine, steps).at_spot(st)
    return b + (b - a) / 3.0


def criterion_8():
    """Second-order residual of the small-gamma expansion."""
    def body():
        model, st, f = cases.benchmark_model(), cases.benchmark_state(), cases.benchmark_payoff()
        p0, _ = price_mmm(model, f, st, nodes=96)
        z = zeta_quadrature(model, f, st)
        gammas = np.array([0.025, 0.05, 0.1, 0.2])
        res = np.array([abs(richardson_price(g) - (p0 - 0.5 * g * z)) for g in gammas])
        slope = float(np.polyfit(np.log(gammas), np.log(res), 1)[0])
        return 1.7 <= slope <= 2.3, {"p0": p0, "zeta": z, "gammas": gammas, "residuals": res, "slope": slope}
    return _timed(8, "asymptotic order", 300, body)


def criterion_9(paths=200000, steps=64):
    """Indifference equation by Monte Carlo utilities."""
    def body():
        model, st, f = cases.benchmark_model(), cases.benchmark_state(), cases.benchmark_payoff()
        surf = _benchmark_surface(0.5, nodes=121, steps=64, n_sd=6.5)
        p = surf.at_spot(st)
        at = verify_indifference(model, f, 0.5, p, surf, st, paths=paths, steps=steps, seed=11)
        hi = verify_indifference(model, f, 0.5, 1.05 * p, surf, st, paths=paths, steps=steps, seed=11, probes=0)
        lo = verify_indifference(model, f, 0.5, 0.95 * p, surf, st, paths=paths, steps=steps, seed=11, probes=0)
        ok = (abs(at.gap_z) <= 3 and hi.gap_z < -3 and lo.gap_z > 3 and at.probe_max_improvement_z <= 2)
        return ok, {"price": p, "gap_z": at.gap_z, "gap_z_plus5": hi.gap_z, "gap_z_minus5": lo.gap_z,
                    "probe_z": [q["improvement_z"] for q in at.probes]}
    return _timed(9, "indifference verification", 300, body)


def criterion_10():
    """Two-fuel electricity forward."""
    def body():
        pm, st = power.aid_2fuel(), power.AID_2FUEL_STATE
        p0 = power.forward_p0(pm, st)
        mc, se = price_mmm(pm.market, pm.payoff, st, paths=200000, seed=21)
        ok_p0 = abs(p0 - mc) <= 3 * se
        worst = 0.0
        h = 1e-4
        for t, x in ((0.0, st.x), (0.5, st.x + np.array([0.1, -0.1, 0.2]))):
            _, dpsi = power.psi_derivatives(pm, t, x[None])
            for j in range(3):
                e = np.zeros(3)
                e[j] = h
                fd = (power.psi_derivatives(pm, t, (x + e)[None])[0] -
                      power.psi_derivatives(pm, t, (x - e)[None])[0]) / (2 * h)
                worst = max(worst, float(np.max(np.abs(dpsi[0, :, j] - fd[0]) / np.maximum(np.abs(fd[0]), 1e-12))))
        ok_fd = worst <= 1e-4
        zf = power.forward_zeta(pm, st)["zeta"]
        zn, zse, _ = asymptotics.zeta(pm.market, pm.payoff, st, outer_paths=2000, inner_paths=2000, time_nodes=16,
                                      seed=22)
        ok_z = abs(zf / zn - 1) <= 0.05
        gamma = 0.2
        expansion = p0 - 0.5 * gamma * zf
        sol = solve_bsde(pm.market, pm.payoff, gamma, steps=32, paths=200000, degree=2, state=st, seed=23)
        ok_b = abs(expansion - sol.Y0) <= 3 * sol.Y0_se + 0.05 * abs(sol.Y0)
        return ok_p0 and ok_fd and ok_z and ok_b, {
            "p0": p0, "p0_mc": mc, "p0_se": se, "psi_fd_rel": worst, "zeta": zf, "zeta_nested": zn,
            "zeta_nested_se": zse, "expansion": expansion, "bsde": sol.Y0, "bsde_se": sol.Y0_se}
    return _timed(10, "electricity forward", 600, body)


def criterion_11():
    """Monotonicity in gamma, concavity in s and the log-exp lower bound."""
    def body():
        model, st, f = cases.benchmark_model(), cases.benchmark_state(), cases.benchmark_payoff()
        gammas = (0.0, 0.25, 0.5, 1.0, 2.0)
        pde_prices = [_benchmark_surface(g, nodes=101, steps=8).at_spot(st) for g in gammas]
        ps = simulate_paths(model, st, "Q0", steps=32, paths=50000, seed=31)
        sols = [solve_bsde(model, f, g, degree=2, pathset=ps) for g in gammas]
        mono_pde = bool(np.all(np.diff(pde_prices) <= 0))
        mono_bsde = all(b.Y0 - a.Y0 <= 2 * max(a.Y0_se, b.Y0_se) for a, b in zip(sols[:-1], sols[1:]))
        # concavity of the price of a payoff linear in s
        lin = P.linear_in_s(1.0, 0.5, 1.0)
        cm = cases.call_model()
        cst = State(0.0, [1.0], [0.0])
        grid = pde.build_grid(cm, cst, pde.GridSpec(nodes=(121, 41), steps=8))
        surf = pde.solve_uip_pde(cm, lin, 0.5, grid)
        s_nodes = grid.natural(0)
        j = int(np.argmin(np.abs(grid.axes[1])))
        u = surf.values[0][:, j]
        inner = slice(10, s_nodes.size - 10)
        d1 = np.diff(u) / np.diff(s_nodes)
        d2 = np.diff(d1) / (0.5 * (s_nodes[2:] - s_nodes[:-2]))
        max_d2 = float(np.max(d2[inner]))
        concave = max_d2 <= 1e-6
        margins = {}
        for g, v in zip(gammas[1:4], pde_prices[1:4]):
            lb, _ = price_lower_bound(model, f, g, st)
            margins[g] = v - lb
        bound_ok = min(margins.values()) >= -1e-4
        return mono_pde and mono_bsde and concave and bound_ok, {
            "pde_prices": pde_prices, "bsde_prices": [s.Y0 for s in sols], "max_second_difference": max_d2,
            "lower_bound_margins": margins}
    return _timed(11, "monotonicity and shape", float("inf"), body)


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 12)}


def run_all(which=None, echo=print):
    results = []
    for k in (which or sorted(CRITERIA)):
        res = CRITERIA[k]()
        if echo is not None:
            echo(format_line(res))
        results.append(res)
    return results
