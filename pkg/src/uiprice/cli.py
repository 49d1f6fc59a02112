"""Command-line front end.

    uiprice price --config run.yaml [--gamma 0.1,0.5] [--engine pde|bsde|expand|power] [--out DIR]
    uiprice hedge | expand | verify | power-forward --config run.yaml
    uiprice acceptance [--criteria 1,2,3]

Exit codes: 0 success, 1 validation failure, 2 numerical divergence,
3 acceptance failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from . import asymptotics, hedging, pde, power
from .config import load_config, apply_overrides, RunConfig
from .errors import ModelValidationError, NumericalDivergence, UIPError
from .io import write_csv, write_json
from .mc import price_mmm, solve_bsde

EXIT_OK, EXIT_VALIDATION, EXIT_DIVERGENCE, EXIT_ACCEPTANCE = 0, 1, 2, 3
COMMANDS = ("price", "hedge", "expand", "verify", "power-forward", "acceptance")

log = logging.getLogger("uiprice")


def _grid(cfg: RunConfig, model, state, coarse=False):
    nodes = cfg.grid["nodes"]
    if coarse:
        nodes = [max(5, (k + 1) // 2) for k in nodes] if isinstance(nodes, list) else max(5, (nodes + 1) // 2)
    return pde.build_grid(model, state, pde.GridSpec(nodes=nodes, steps=cfg.grid["steps"], n_sd=cfg.grid["n_sd"]))


def _header(cfg):
    return f"uiprice {__version__}; config {cfg.config_hash()}; seed {cfg.seed}"


def _report(cfg, command, rows, extra=None, started=None):
    rep = {"schema_version": 1, "command": command, "config_hash": cfg.config_hash(), "engine": cfg.engine,
           "seed": cfg.seed, "results": rows}
    if started is not None:
        rep["timing_seconds"] = time.perf_counter() - started
    rep.update(extra or {})
    return rep


def _pde_price(cfg, model, f, state, gamma):
    fine = pde.solve_uip_pde(model, f, gamma, _grid(cfg, model, state), side=cfg.side)
    coarse = pde.solve_uip_pde(model, f, gamma, _grid(cfg, model, state, coarse=True), side=cfg.side)
    v = fine.at_spot(state)
    return fine, v, abs(v - coarse.at_spot(state))


def cmd_price(cfg: RunConfig, out, timings=True):
    t0 = time.perf_counter()
    model, f, state = cfg.market(), cfg.build_payoff(), cfg.start_state()
    rows = []
    for gamma in cfg.gammas:
        entry = {"gamma": gamma, "engine": cfg.engine, "side": cfg.side}
        if cfg.engine == "pde":
            surf, v, tol = _pde_price(cfg, model, f, state, gamma)
            entry.update(price=v, se=0.0, tolerance=tol, grid=surf.grid.to_dict(),
                         mollify_index=surf.meta.get("mollify_index"))
            surf.to_csv(os.path.join(out, f"surface_gamma{gamma:g}.csv"), levels=[0])
        elif cfg.engine == "bsde":
            sol = solve_bsde(model, f, gamma, cfg.side, steps=cfg.mc["steps"], paths=cfg.mc["paths"],
                             degree=cfg.mc["degree"], seed=cfg.seed, state=state, threads=cfg.threads)
            entry.update(price=sol.Y0, se=sol.Y0_se, tolerance=None, basis=sol.basis_spec,
                         m_used=float(np.min(sol.m_auto)))
        elif cfg.engine == "expand":
            exp = asymptotics.expand_price(model, f, gamma, state, paths=cfg.mc["paths"], seed=cfg.seed) \
                if gamma > 0 else None
            if exp is None:
                p0, se = price_mmm(model, f, state, paths=cfg.mc["paths"], seed=cfg.seed)
                entry.update(price=p0, se=se, tolerance="exact at gamma = 0")
            else:
                entry.update(price=exp.price_estimate, se=exp.se, tolerance="O(gamma^2)", p0=exp.p0, zeta=exp.zeta)
        else:
            pm = cfg.power_model()
            rep = power.forward_uip(pm, gamma, state) if gamma > 0 else {"expansion": power.forward_p0(pm, state)}
            entry.update(price=rep["expansion"], se=0.0, tolerance="O(gamma^2)")
        rows.append(entry)
    write_csv(os.path.join(out, "price.csv"), ["gamma", "engine", "side", "price", "se", "tolerance"],
              [[r["gamma"], r["engine"], r["side"], r["price"], r["se"], r["tolerance"]] for r in rows],
              comment=_header(cfg))
    write_json(os.path.join(out, "report.json"), _report(cfg, "price", rows, started=t0 if timings else None))
    return EXIT_OK


def _pde_surface(cfg, gamma):
    model, f, state = cfg.market(), cfg.build_payoff(), cfg.start_state()
    if model.dim > 3:
        raise ModelValidationError("engine: hedging and verification need a pde surface (n + d <= 3)")
    spec = pde.GridSpec(nodes=cfg.grid["nodes"], steps=cfg.grid["steps"], n_sd=max(cfg.grid["n_sd"], 6.5))
    return pde.solve_uip_pde(model, f, gamma, pde.build_grid(model, state, spec))


def cmd_hedge(cfg: RunConfig, out, timings=True):
    t0 = time.perf_counter()
    model, state = cfg.market(), cfg.start_state()
    gamma = cfg.gammas[0]
    surf = _pde_surface(cfg, gamma)
    strat = hedging.optimal_strategy(surf, model, gamma, "claim")
    s, x = state.s[None, :], state.x[None, :]
    delta = strat.delta(state.t, s, x)[0]
    row = {"gamma": gamma, "price": surf.at_spot(state), "delta": delta, "merton": strat.merton,
           "claim_strategy": strat(state.t, s, x)[0]}
    g = surf.grid
    s_nodes, x_nodes = g.mesh()
    sn, xn = s_nodes.reshape(-1, g.n), x_nodes.reshape(-1, g.d)
    d_all = strat.delta(g.times[0], sn, xn)
    write_csv(os.path.join(out, "strategy.csv"),
              [f"s{i + 1}" for i in range(g.n)] + [f"x{j + 1}" for j in range(g.d)] +
              [f"delta{i + 1}" for i in range(g.n)],
              np.concatenate([sn, xn, d_all], axis=1).tolist(), comment=_header(cfg))
    write_json(os.path.join(out, "report.json"), _report(cfg, "hedge", [row], started=t0 if timings else None))
    return EXIT_OK


def cmd_expand(cfg: RunConfig, out, timings=True):
    t0 = time.perf_counter()
    model, f, state = cfg.market(), cfg.build_payoff(), cfg.start_state()
    rows = []
    for gamma in cfg.gammas:
        if gamma <= 0:
            raise ModelValidationError("gamma: the expansion needs gamma > 0")
        exp = asymptotics.expand_price(model, f, gamma, state, paths=cfg.mc["paths"], seed=cfg.seed)
        lb, lb_se = asymptotics.price_lower_bound(model, f, gamma, state, seed=cfg.seed)
        rows.append({**exp.to_dict(), "lower_bound": lb, "lower_bound_se": lb_se})
    write_json(os.path.join(out, "expansion.json"), _report(cfg, "expand", rows, started=t0 if timings else None))
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out, timings=True):
    t0 = time.perf_counter()
    model, f, state = cfg.market(), cfg.build_payoff(), cfg.start_state()
    gamma = cfg.gammas[0]
    surf = _pde_surface(cfg, gamma)
    price = surf.at_spot(state)
    rep = hedging.verify_indifference(model, f, gamma, price, surf, state, paths=cfg.mc["paths"],
                                      steps=cfg.mc["steps"], seed=cfg.seed, keep_wealth=True)
    rep.histogram_csv(os.path.join(out, "wealth_histogram.csv"))
    write_json(os.path.join(out, "verify.json"), _report(cfg, "verify", [rep.to_dict()],
                                                        started=t0 if timings else None))
    return EXIT_OK


def cmd_power_forward(cfg: RunConfig, out, timings=True):
    t0 = time.perf_counter()
    if cfg.preset is None:
        raise ModelValidationError("preset: power-forward needs a power preset")
    pm, state = cfg.power_model(), cfg.start_state()
    rows = []
    for gamma in cfg.gammas:
        rep = power.forward_uip(pm, gamma, state, bsde=cfg.engine == "bsde", bsde_paths=cfg.mc["paths"],
                                bsde_steps=cfg.mc["steps"], degree=min(cfg.mc["degree"], 2), seed=cfg.seed)
        power.decomposition_csv(rep, os.path.join(out, f"decomposition_gamma{gamma:g}.csv"))
        rows.append(rep)
    write_json(os.path.join(out, "power_forward.json"),
               _report(cfg, "power-forward", rows, extra={"model": pm.to_dict()}, started=t0 if timings else None))
    return EXIT_OK


def cmd_acceptance(out, criteria=None):
    from .acceptance import run_all
    results = run_all(criteria)
    write_json(os.path.join(out, "acceptance.json"),
               {"schema_version": 1, "results": [r.to_dict() for r in results],
                "passed": all(r.passed for r in results)})
    return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPTANCE


HANDLERS = {"price": cmd_price, "hedge": cmd_hedge, "expand": cmd_expand, "verify": cmd_verify,
            "power-forward": cmd_power_forward}


def build_parser():
    p = argparse.ArgumentParser(prog="uiprice", description="Utility indifference pricing engines.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma", help="risk aversion, comma separated")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int)
    p.add_argument("--engine", choices=("pde", "bsde", "expand", "power"))
    p.add_argument("--criteria", help="acceptance criteria to run, comma separated")
    p.add_argument("--no-timings", action="store_true", help="omit wall-clock timings for byte-identical reports")
    return p


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "acceptance":
            out = args.out or "out"
            os.makedirs(out, exist_ok=True)
            crit = [int(c) for c in args.criteria.split(",")] if args.criteria else None
            return cmd_acceptance(out, crit)
        if not args.config:
            raise ModelValidationError("--config: required for this command")
        cfg = load_config(args.config)
        gammas = [float(g) for g in args.gamma.split(",")] if args.gamma else None
        cfg = apply_overrides(cfg, seed=args.seed, gammas=gammas, out=args.out, threads=args.threads,
                              engine=args.engine)
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, "config.normalized.yaml"), "w") as fh:
            fh.write(cfg.to_yaml())
        return HANDLERS[args.command](cfg, cfg.out, timings=not args.no_timings)
    except NumericalDivergence as exc:
        print(f"error: numerical divergence: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(f"diagnostics: {exc.diagnostics}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ModelValidationError, UIPError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
