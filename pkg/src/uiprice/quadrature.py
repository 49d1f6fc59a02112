"""Gaussian quadrature helpers for expectations against normal laws."""
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .errors import QuadratureError
from .model import GaussianLaw


@lru_cache(maxsize=32)
def hermite_rule(k):
    """Nodes and weights for ``E[h(Z)]``, ``Z ~ N(0, 1)``, with ``k`` points."""
    z, w = np.polynomial.hermite_e.hermegauss(int(k))
    return z, w / np.sqrt(2.0 * np.pi)


@lru_cache(maxsize=32)
def legendre_rule(k):
    return np.polynomial.legendre.leggauss(int(k))


def _sqrt_psd(cov):
    w, v = np.linalg.eigh(cov)
    return v * np.sqrt(np.clip(w, 0.0, None))


def tensor_points(law: GaussianLaw, k=64):
    """Tensor Gauss-Hermite points ``mean + L z`` and weights for ``law``."""
    dim = law.mean.size
    z, w = hermite_rule(k)
    grids = np.meshgrid(*([z] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.ones(pts.shape[0])
    for g in np.meshgrid(*([w] * dim), indexing="ij"):
        wts = wts * g.ravel()
    return law.mean + pts @ _sqrt_psd(law.cov).T, wts


def gaussian_expectation(func, law: GaussianLaw, k=64):
    """``E[func(Y)]`` for ``Y ~ law`` by a ``k``-point tensor rule.

    ``func`` maps an (m, dim) array to (m,) or (m, p).
    """
    pts, wts = tensor_points(law, k)
    vals = np.asarray(func(pts), dtype=float)
    return np.tensordot(wts, vals, axes=(0, 0))


def log_expectation_exp(log_terms, weights=None):
    """``log E[exp(log_terms)]`` with weights summing to one (uniform if omitted)."""
    log_terms = np.asarray(log_terms, dtype=float)
    if weights is None:
        return float(logsumexp(log_terms) - np.log(log_terms.size))
    weights = np.asarray(weights, dtype=float)
    pos = weights > 0
    return float(logsumexp(log_terms[pos], b=weights[pos]))


def piecewise_legendre(func, breaks, k=64):
    """Integrate ``func`` (vectorised, 1-D) over consecutive intervals of ``breaks``."""
    x, w = legendre_rule(k)
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        total = total + half * np.tensordot(w, np.asarray(func(mid + half * x)), axes=(0, 0))
    return total


def check_refinement(coarse, fine, rtol=1e-6, atol=1e-12, what="quadrature"):
    coarse = np.asarray(coarse, dtype=float)
    fine = np.asarray(fine, dtype=float)
    err = np.max(np.abs(coarse - fine) - rtol * np.abs(fine)) if coarse.size else -1.0
    if err > atol:
        raise QuadratureError(f"{what}: refinement changed the result beyond {rtol:g} relative "
                              f"(max change {np.max(np.abs(coarse - fine)):.3g})")
    return fine
