"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

The public names (``tridiag_solve``, ``apply_tridiag``, ``hamiltonian_field``,
``poly_features``) dispatch to numba unless ``UIPRICE_DISABLE_NUMBA`` is set.
Both flavours stay importable under ``*_numpy`` / ``*_numba`` so the benchmark
and the equivalence tests can call them side by side.
"""
import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA, njit


# ---------------------------------------------------------------------------
# batched tridiagonal solve, one shared matrix and many right-hand sides
# ---------------------------------------------------------------------------

def tridiag_solve_numpy(lower, diag, upper, rhs):
    """Solve ``T u = rhs`` row-wise where ``T`` is shared by all rows of ``rhs``.

    ``lower[0]`` and ``upper[-1]`` are ignored. ``rhs`` has shape (L, N).
    """
    n = diag.shape[0]
    cp = np.empty(n)
    den = np.empty(n)
    den[0] = diag[0]
    cp[0] = upper[0] / den[0]
    for i in range(1, n):
        den[i] = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / den[i] if i < n - 1 else 0.0
    out = np.empty_like(rhs)
    out[:, 0] = rhs[:, 0] / den[0]
    for i in range(1, n):
        out[:, i] = (rhs[:, i] - lower[i] * out[:, i - 1]) / den[i]
    for i in range(n - 2, -1, -1):
        out[:, i] -= cp[i] * out[:, i + 1]
    return out


def _tridiag_solve_loop(lower, diag, upper, rhs):
    n = diag.shape[0]
    nl = rhs.shape[0]
    cp = np.empty(n)
    den = np.empty(n)
    den[0] = diag[0]
    cp[0] = upper[0] / den[0]
    for i in range(1, n):
        den[i] = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / den[i] if i < n - 1 else 0.0
    out = np.empty_like(rhs)
    for r in range(nl):
        prev = rhs[r, 0] / den[0]
        out[r, 0] = prev
        for i in range(1, n):
            prev = (rhs[r, i] - lower[i] * prev) / den[i]
            out[r, i] = prev
        for i in range(n - 2, -1, -1):
            out[r, i] -= cp[i] * out[r, i + 1]
    return out


# ---------------------------------------------------------------------------
# three-point stencil application along the last axis (interior rows only)
# ---------------------------------------------------------------------------

def apply_tridiag_numpy(lower, diag, upper, u):
    out = np.zeros_like(u)
    out[:, 1:-1] = (lower[1:-1] * u[:, :-2] + diag[1:-1] * u[:, 1:-1]
                    + upper[1:-1] * u[:, 2:])
    return out


def _apply_tridiag_loop(lower, diag, upper, u):
    nl, n = u.shape
    out = np.zeros_like(u)
    for r in range(nl):
        for i in range(1, n - 1):
            out[r, i] = lower[i] * u[r, i - 1] + diag[i] * u[r, i] + upper[i] * u[r, i + 1]
    return out


# ---------------------------------------------------------------------------
# truncated Hamiltonian over a field of gradients
# ---------------------------------------------------------------------------

def hamiltonian_field_numpy(q, gamma, m):
    """Vectorised truncated Hamiltonian.

    ``q`` has shape (M, d). Returns the values (M,) and the maximising
    controls (M, d). ``m = inf`` gives the untruncated quadratic.
    """
    norm = np.sqrt(np.einsum("ij,ij->i", q, q))
    free = gamma * norm <= m
    value = 0.5 * gamma * norm**2
    scale = np.full(norm.shape, gamma)
    if not free.all():
        cut = ~free
        value[cut] = m * norm[cut] - m * m / (2.0 * gamma)
        scale[cut] = m / norm[cut]
    delta = -scale[:, None] * q
    return value, delta


def _hamiltonian_field_loop(q, gamma, m):
    nq, d = q.shape
    value = np.empty(nq)
    delta = np.empty((nq, d))
    for i in range(nq):
        s = 0.0
        for j in range(d):
            s += q[i, j] * q[i, j]
        norm = np.sqrt(s)
        if gamma * norm <= m:
            value[i] = 0.5 * gamma * s
            for j in range(d):
                delta[i, j] = -gamma * q[i, j]
        else:
            value[i] = m * norm - m * m / (2.0 * gamma)
            for j in range(d):
                delta[i, j] = -m * q[i, j] / norm
    return value, delta


# ---------------------------------------------------------------------------
# monomial features for the regression basis
# ---------------------------------------------------------------------------

def poly_features_numpy(z, exps):
    """Monomials ``prod_j z[:, j]**exps[p, j]`` for every row ``p`` of ``exps``."""
    m = z.shape[0]
    out = np.ones((m, exps.shape[0]))
    maxdeg = int(exps.max()) if exps.size else 0
    powers = [np.ones_like(z)]
    for _ in range(maxdeg):
        powers.append(powers[-1] * z)
    for p in range(exps.shape[0]):
        for j in range(z.shape[1]):
            e = exps[p, j]
            if e:
                out[:, p] *= powers[e][:, j]
    return out


def _poly_features_loop(z, exps):
    m, k = z.shape
    npoly = exps.shape[0]
    out = np.empty((m, npoly))
    for i in range(m):
        for p in range(npoly):
            acc = 1.0
            for j in range(k):
                for _ in range(exps[p, j]):
                    acc *= z[i, j]
            out[i, p] = acc
    return out


if HAVE_NUMBA:
    tridiag_solve_numba = njit(cache=True)(_tridiag_solve_loop)
    apply_tridiag_numba = njit(cache=True)(_apply_tridiag_loop)
    hamiltonian_field_numba = njit(cache=True)(_hamiltonian_field_loop)
    poly_features_numba = njit(cache=True)(_poly_features_loop)
else:  # pragma: no cover - numba is a declared dependency
    tridiag_solve_numba = _tridiag_solve_loop
    apply_tridiag_numba = _apply_tridiag_loop
    hamiltonian_field_numba = _hamiltonian_field_loop
    poly_features_numba = _poly_features_loop


def _pick(fast, slow):
    return fast if USE_NUMBA else slow


def tridiag_solve(lower, diag, upper, rhs):
    fn = _pick(tridiag_solve_numba, tridiag_solve_numpy)
    return fn(np.ascontiguousarray(lower, dtype=float), np.ascontiguousarray(diag, dtype=float),
              np.ascontiguousarray(upper, dtype=float), np.ascontiguousarray(rhs, dtype=float))


def apply_tridiag(lower, diag, upper, u):
    fn = _pick(apply_tridiag_numba, apply_tridiag_numpy)
    return fn(np.ascontiguousarray(lower, dtype=float), np.ascontiguousarray(diag, dtype=float),
              np.ascontiguousarray(upper, dtype=float), np.ascontiguousarray(u, dtype=float))


def hamiltonian_field(q, gamma, m):
    q = np.ascontiguousarray(np.atleast_2d(q), dtype=float)
    fn = _pick(hamiltonian_field_numba, hamiltonian_field_numpy)
    return fn(q, float(gamma), float(m))


def poly_features(z, exps):
    fn = _pick(poly_features_numba, poly_features_numpy)
    return fn(np.ascontiguousarray(z, dtype=float), np.ascontiguousarray(exps, dtype=np.int64))
