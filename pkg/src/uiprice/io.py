"""CSV and JSON writers with exact float formatting, plus an ``npz`` cache for price surfaces."""
from __future__ import annotations

import json
import os

import numpy as np

from .pde import Grid, PriceSurface

FLOAT_FMT = "{:.17g}"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    return "" if v is None else str(v)


def write_csv(path, header, rows, comment=None):
    """Write ``rows`` with every float at 17 significant digits; ``comment`` lines start with ``#``."""
    with open(path, "w") as fh:
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def read_csv(path):
    """Read a file written by :func:`write_csv` into ``(header, float array)``."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    header = lines[0].strip().split(",")
    data = np.array([[float(v) for v in ln.strip().split(",")] for ln in lines[1:]]) if len(lines) > 1 \
        else np.zeros((0, len(header)))
    return header, data


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def write_json(path, obj):
    """JSON with sorted keys; floats use the shortest repr that round-trips exactly."""
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def surface_path(cache_dir, key):
    return os.path.join(cache_dir, f"surface-{key}.npz")


def save_surface(surf: PriceSurface, path):
    g = surf.grid
    arrays = {f"axis{k}": a for k, a in enumerate(g.axes)}
    np.savez(path, values=surf.values, times=g.times, n=g.n, d=g.d, gamma=surf.gamma, m=surf.m,
             side=np.array(surf.side), n_axes=len(g.axes), **arrays)


def load_surface(path) -> PriceSurface:
    with np.load(path) as z:
        axes = [z[f"axis{k}"] for k in range(int(z["n_axes"]))]
        grid = Grid(axes=axes, n=int(z["n"]), d=int(z["d"]), times=z["times"])
        return PriceSurface(grid=grid, values=z["values"], gamma=float(z["gamma"]), side=str(z["side"]),
                            m=float(z["m"]), meta={"cached": True})


def cached_solve(cache_dir, key, solve):
    """Return the cached surface under ``key`` or call ``solve()`` and store its result."""
    if cache_dir:
        path = surface_path(cache_dir, key)
        if os.path.exists(path):
            return load_surface(path)
    surf = solve()
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        save_surface(surf, surface_path(cache_dir, key))
    return surf
