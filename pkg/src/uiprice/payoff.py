"""European claims ``f(s, x)`` with regularity and growth metadata.

Payoff functions are vectorised: ``func(s, x)`` takes ``s`` of shape (..., n)
and ``x`` of shape (..., d) and returns shape (...). Discontinuities may only
occur across declared hyperplanes in ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ModelValidationError, UIPError

SMOOTH = "SmoothC3"
CONTINUOUS = "ContinuousNonSmooth"
DISCONTINUOUS = "DiscontinuousInX"
REGULARITIES = (SMOOTH, CONTINUOUS, DISCONTINUOUS)

MOLLIFIER_NODES = 16


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """The set ``{x : normal . x = offset}``."""

    normal: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        nv = np.asarray(self.normal, dtype=float).ravel()
        if not np.any(nv):
            raise ModelValidationError("hyperplane normal must be nonzero")
        object.__setattr__(self, "normal", nv)
        object.__setattr__(self, "offset", float(self.offset))

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.abs(x @ self.normal - self.offset) / np.linalg.norm(self.normal)


@dataclass(frozen=True, eq=False)
class Payoff:
    """An evaluable claim with declared metadata.

    Parameters
    ----------
    func : vectorised ``(s, x) -> value``.
    n, d : numbers of traded and nontraded arguments.
    grad_s, grad_x : optional analytic derivatives returning (..., n) / (..., d).
    regularity : one of ``SmoothC3``, ``ContinuousNonSmooth``, ``DiscontinuousInX``.
    q : polynomial growth degree in ``s``.
    bounded_in_x, bounded_below : growth flags.
    bound : ``sup |f|`` when the payoff is bounded, else ``None``.
    loci : hyperplanes in ``x`` across which ``f`` may jump.
    depends_on_s, depends_on_x : structural flags used to shortcut engines.
    spec : the configuration dictionary that rebuilds this payoff.
    """

    func: Callable
    n: int
    d: int
    grad_s: Optional[Callable] = None
    grad_x: Optional[Callable] = None
    regularity: str = SMOOTH
    q: float = 0.0
    bounded_in_x: bool = True
    bounded_below: bool = True
    bound: Optional[float] = None
    loci: tuple = ()
    depends_on_s: bool = True
    depends_on_x: bool = True
    name: str = "custom"
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.regularity not in REGULARITIES:
            raise ModelValidationError(f"unknown regularity {self.regularity!r}")
        if self.regularity == DISCONTINUOUS and not self.bounded_below:
            raise ModelValidationError("payoffs discontinuous in x must be bounded below")
        if self.regularity != DISCONTINUOUS and self.loci:
            raise ModelValidationError("discontinuity loci declared on a continuous payoff")
        object.__setattr__(self, "loci", tuple(self.loci))

    def __call__(self, s, x):
        return evaluate(self, s, x)

    @property
    def is_bounded(self):
        return self.bound is not None

    @property
    def smooth(self):
        return self.regularity == SMOOTH

    def negated(self):
        """The claim ``-f``; boundedness below is lost unless ``f`` is bounded."""
        f = self.func
        gs, gx = self.grad_s, self.grad_x
        return Payoff(
            func=lambda s, x: -f(s, x),
            n=self.n, d=self.d,
            grad_s=None if gs is None else (lambda s, x: -gs(s, x)),
            grad_x=None if gx is None else (lambda s, x: -gx(s, x)),
            regularity=self.regularity if (self.bound is not None or self.regularity != DISCONTINUOUS)
            else CONTINUOUS,
            q=self.q, bounded_in_x=self.bounded_in_x, bounded_below=self.bound is not None,
            bound=self.bound, loci=self.loci if self.bound is not None else (),
            depends_on_s=self.depends_on_s, depends_on_x=self.depends_on_x,
            name=f"neg({self.name})", spec={"name": "negate", "of": self.spec},
        )

    def envelope(self, s):
        """Growth envelope ``(1 + |s|^q)`` scaled by the bound when known."""
        s = np.asarray(s, dtype=float)
        base = 1.0 + np.sum(np.abs(s), axis=-1) ** self.q if self.n else np.ones(s.shape[:-1])
        return base * (self.bound if self.bound is not None else 1.0)


def _split(p: Payoff, s, x):
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    if p.n and s.shape[-1] != p.n:
        raise ModelValidationError(f"payoff expects n={p.n} traded coordinates, got {s.shape[-1]}")
    if p.d and x.shape[-1] != p.d:
        raise ModelValidationError(f"payoff expects d={p.d} nontraded coordinates, got {x.shape[-1]}")
    return s, x


def evaluate(p: Payoff, s, x):
    """Evaluate ``f(s, x)``; raises on non-positive prices or non-finite values."""
    s, x = _split(p, s, x)
    if s.size and np.any(s <= 0):
        raise ModelValidationError("traded prices must be strictly positive")
    out = np.asarray(p.func(s, x), dtype=float)
    if not np.all(np.isfinite(out)):
        raise UIPError(f"payoff {p.name!r} produced non-finite values")
    return out


@dataclass(frozen=True)
class OneSidedGradients:
    s_left: np.ndarray
    s_right: np.ndarray
    x_left: np.ndarray
    x_right: np.ndarray
    jump: bool

    @property
    def f_s(self):
        return 0.5 * (self.s_left + self.s_right)

    @property
    def f_x(self):
        return 0.5 * (self.x_left + self.x_right)


def _fd_step(c):
    return 1e-5 * (1.0 + abs(c))


def one_sided_gradients(p: Payoff, s, x) -> OneSidedGradients:
    """Left and right partial derivatives at a single state.

    Declared analytic gradients are returned away from discontinuity loci.
    Otherwise second-order one-sided differences with step
    ``h = 1e-5 (1 + |coordinate|)`` are used; they coincide with a central
    difference wherever ``f`` is smooth. Within ``3h`` of a declared locus the
    stencils skip the point itself so each side sees only its own branch, and
    ``jump`` reports whether ``f`` changes by more than ``1e-8`` across it.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float)).copy()
    x = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    _split(p, s, x)
    f = lambda ss, xx: float(evaluate(p, ss, xx))  # noqa: E731

    def sides(vec, i, other, is_s, near):
        c = vec[i]
        h = _fd_step(c)
        if is_s:
            h = min(h, c / 4.0)

        def at(k):
            v = vec.copy()
            v[i] = c + k * h
            return f(v, other) if is_s else f(other, v)

        if near:
            left = (3 * at(-1) - 4 * at(-2) + at(-3)) / (2 * h)
            right = (-3 * at(1) + 4 * at(2) - at(3)) / (2 * h)
            return left, right, abs(at(1) - at(-1)) > 1e-8
        f0 = at(0)
        left = (3 * f0 - 4 * at(-1) + at(-2)) / (2 * h)
        right = (-3 * f0 + 4 * at(1) - at(2)) / (2 * h)
        if abs(left - right) <= 1e-6 * (1.0 + abs(left) + abs(right)):
            central = (at(1) - at(-1)) / (2 * h)
            return central, central, False
        return left, right, False

    near_locus = bool(p.loci) and any(L.distance(x) <= 3 * _fd_step(np.max(np.abs(x))) for L in p.loci)

    sl = np.zeros(p.n)
    sr = np.zeros(p.n)
    if p.grad_s is not None:
        sl = sr = np.asarray(p.grad_s(s, x), dtype=float).reshape(p.n)
    else:
        for i in range(p.n):
            sl[i], sr[i], _ = sides(s, i, x, True, False)
    xl = np.zeros(p.d)
    xr = np.zeros(p.d)
    jump = False
    if p.grad_x is not None and not near_locus:
        xl = xr = np.asarray(p.grad_x(s, x), dtype=float).reshape(p.d)
    else:
        for i in range(p.d):
            involved = near_locus and any(L.normal[i] != 0 for L in p.loci)
            xl[i], xr[i], j = sides(x, i, s, False, involved)
            jump = jump or j
    return OneSidedGradients(np.array(sl, dtype=float), np.array(sr, dtype=float), xl, xr, jump)


def _bump(r2):
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def mollify(p: Payoff, l) -> Payoff:
    """Smooth ``f`` in ``x`` with the compact bump kernel of radius ``1/l``.

    ``f^l(s, x) = int f(s, x + y) psi^l(y) dy`` with
    ``psi^l(y) = l^d K exp(-1 / (1 - |l y|^2))`` on the ball ``|y| < 1/l``.
    The integral uses a tensor Gauss-Legendre rule with 16 nodes per axis on
    the cube ``[-1/l, 1/l]^d`` and weights renormalised to unit mass. Points
    farther than ``1/l`` from every locus return ``f`` itself.
    """
    if p.d == 0:
        raise ModelValidationError("nothing to mollify: the payoff has no nontraded argument")
    l = float(l)
    if not l >= 1.0:
        raise ModelValidationError(f"smoothing index must be >= 1, got {l}")
    nodes, weights = np.polynomial.legendre.leggauss(MOLLIFIER_NODES)
    grids = np.meshgrid(*([nodes] * p.d), indexing="ij")
    u = np.stack([g.ravel() for g in grids], axis=-1)  # points in [-1,1]^d
    w = np.ones(u.shape[0])
    for g in np.meshgrid(*([weights] * p.d), indexing="ij"):
        w = w * g.ravel()
    w = w * _bump(np.sum(u * u, axis=1))
    w = w / w.sum()
    offsets = u / l
    base = p.func
    loci = p.loci

    def func(s, x):
        s = np.asarray(s, dtype=float)
        x = np.asarray(x, dtype=float)
        shape = np.broadcast_shapes(s.shape[:-1], x.shape[:-1])
        rows = int(np.prod(shape))
        sb = np.broadcast_to(s, shape + (s.shape[-1],)).reshape(rows, s.shape[-1])
        xb = np.broadcast_to(x, shape + (x.shape[-1],)).reshape(rows, x.shape[-1])
        out = np.asarray(base(sb, xb), dtype=float).copy()
        if loci:
            near = np.zeros(xb.shape[0], dtype=bool)
            for L in loci:
                near |= L.distance(xb) <= 1.0 / l
        else:
            near = np.ones(xb.shape[0], dtype=bool)
        idx = np.nonzero(near)[0]
        for chunk in np.array_split(idx, max(1, idx.size * offsets.shape[0] // 2_000_000 + 1)):
            if chunk.size == 0:
                continue
            xs = xb[chunk][:, None, :] + offsets[None, :, :]
            ss = np.broadcast_to(sb[chunk][:, None, :], (chunk.size, offsets.shape[0], sb.shape[-1]))
            out[chunk] = np.asarray(base(ss, xs), dtype=float) @ w
        return out.reshape(shape)

    return Payoff(func=func, n=p.n, d=p.d, grad_s=None, grad_x=None, regularity=SMOOTH, q=p.q,
                  bounded_in_x=p.bounded_in_x, bounded_below=p.bounded_below, bound=p.bound,
                  depends_on_s=p.depends_on_s, depends_on_x=p.depends_on_x,
                  name=f"mollified({p.name}, l={l:g})",
                  spec={"name": "mollify", "l": l, "of": p.spec})


# ---------------------------------------------------------------------------
# scarcity functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScarcityFunction:
    """Bounded map from reserve margin to a price multiplier."""

    g: Callable
    g_prime: Callable
    bound: float
    kinks: tuple = ()
    name: str = "custom"
    spec: dict = field(default_factory=dict)

    def __call__(self, z):
        return self.g(np.asarray(z, dtype=float))

    def check(self, lo=-5.0, hi=5.0, num=2001):
        """Spot-check the bound and the derivative on a grid away from kinks."""
        z = np.linspace(lo, hi, num)
        if np.max(np.abs(self.g(z))) > self.bound * (1 + 1e-12):
            raise ModelValidationError(f"scarcity function exceeds its declared bound {self.bound}")
        h = 1e-6
        ok = np.ones_like(z, dtype=bool)
        for k in self.kinks:
            ok &= np.abs(z - k) > 10 * h
        fd = (self.g(z + h) - self.g(z - h)) / (2 * h)
        err = np.abs(fd - self.g_prime(z))[ok]
        if err.size and err.max() > 1e-6 * max(1.0, np.max(np.abs(self.g_prime(z)[ok]))):
            raise ModelValidationError("scarcity derivative disagrees with finite differences")
        return True


def constant_scarcity(c=1.0):
    c = float(c)
    return ScarcityFunction(g=lambda z: np.full(np.shape(z), c), g_prime=lambda z: np.zeros(np.shape(z)),
                            bound=abs(c), name=f"constant({c:g})", spec={"name": "constant", "value": c})


def scarcity_power(M=5.0, nu=1.0):
    """``g(z) = min(M, z^{-nu})`` for ``z > 0`` and ``M`` otherwise."""
    M, nu = float(M), float(nu)
    if M <= 0 or nu <= 0:
        raise ModelValidationError("scarcity-power needs M > 0 and nu > 0")
    kink = M ** (-1.0 / nu)

    def g(z):
        z = np.asarray(z, dtype=float)
        out = np.full(z.shape, M)
        big = z > kink
        out[big] = z[big] ** (-nu)
        return out

    def gp(z):
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape)
        big = z > kink
        out[big] = -nu * z[big] ** (-nu - 1.0)
        return out

    return ScarcityFunction(g=g, g_prime=gp, bound=M, kinks=(kink,), name=f"scarcity-power({M:g},{nu:g})",
                            spec={"name": "scarcity-power", "M": M, "nu": nu})


def scarcity_from_config(cfg):
    if cfg is None:
        return constant_scarcity(1.0)
    name = cfg.get("name")
    if name == "constant":
        return constant_scarcity(cfg.get("value", 1.0))
    if name == "scarcity-power":
        return scarcity_power(cfg.get("M", 5.0), cfg.get("nu", 1.0))
    raise ModelValidationError(f"unknown scarcity function {name!r}")


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def _zeros_like_lead(s, x, k):
    lead = np.broadcast_shapes(np.shape(s)[:-1], np.shape(x)[:-1])
    return np.zeros(lead + (k,))


def constant(c, n, d):
    c = float(c)

    def func(s, x):
        lead = np.broadcast_shapes(np.shape(s)[:-1], np.shape(x)[:-1])
        return np.full(lead, c)

    return Payoff(func=func, n=n, d=d, grad_s=lambda s, x: _zeros_like_lead(s, x, n),
                  grad_x=lambda s, x: _zeros_like_lead(s, x, d), q=0, bound=abs(c),
                  depends_on_s=False, depends_on_x=False, name=f"constant({c:g})",
                  spec={"name": "constant", "value": c})


def linear(n, d, ws=None, wx=None, c=0.0):
    """``c + ws . s + wx . x``."""
    ws = np.zeros(n) if ws is None else np.asarray(ws, dtype=float).ravel()
    wx = np.zeros(d) if wx is None else np.asarray(wx, dtype=float).ravel()
    c = float(c)

    def func(s, x):
        out = c + (np.asarray(s) @ ws if n else 0.0) + (np.asarray(x) @ wx if d else 0.0)
        lead = np.broadcast_shapes(np.shape(s)[:-1], np.shape(x)[:-1])
        return np.broadcast_to(out, lead).astype(float)

    has_x = bool(np.any(wx))
    return Payoff(func=func, n=n, d=d,
                  grad_s=lambda s, x: _zeros_like_lead(s, x, n) + ws,
                  grad_x=lambda s, x: _zeros_like_lead(s, x, d) + wx,
                  q=1 if np.any(ws) else 0, bounded_in_x=not has_x,
                  bounded_below=not (np.any(ws < 0) or has_x),
                  bound=None if (np.any(ws) or has_x) else abs(c),
                  depends_on_s=bool(np.any(ws)), depends_on_x=has_x, name="linear",
                  spec={"name": "linear", "ws": ws.tolist(), "wx": wx.tolist(), "c": c})


def digital(n, d, index=0, threshold=0.0, amount=1.0):
    """``amount * 1{x_index >= threshold}``."""
    amount = float(amount)
    threshold = float(threshold)
    if amount < 0:
        raise ModelValidationError("digital amount must be nonnegative")
    normal = np.zeros(d)
    normal[index] = 1.0

    def func(s, x):
        x = np.asarray(x, dtype=float)
        out = amount * (x[..., index] >= threshold)
        lead = np.broadcast_shapes(np.shape(s)[:-1], x.shape[:-1])
        return np.broadcast_to(out, lead).astype(float)

    return Payoff(func=func, n=n, d=d, grad_s=lambda s, x: _zeros_like_lead(s, x, n),
                  regularity=DISCONTINUOUS, q=0, bound=amount, loci=(Hyperplane(normal, threshold),),
                  depends_on_s=False, name="digital",
                  spec={"name": "digital", "index": int(index), "threshold": threshold, "amount": amount})


def call(n, d, strike, index=0):
    """``(s_index - K)^+``."""
    strike = float(strike)

    def func(s, x):
        s = np.asarray(s, dtype=float)
        out = np.maximum(s[..., index] - strike, 0.0)
        lead = np.broadcast_shapes(s.shape[:-1], np.shape(x)[:-1])
        return np.broadcast_to(out, lead).astype(float)

    return Payoff(func=func, n=n, d=d, grad_x=lambda s, x: _zeros_like_lead(s, x, d),
                  regularity=CONTINUOUS, q=1, depends_on_x=False, name="call",
                  spec={"name": "call", "strike": strike, "index": int(index)})


def make_spread_call(strike, weights, d=0):
    """``(w . s - K)^+`` on ``n = len(weights)`` traded assets."""
    w = np.asarray(weights, dtype=float).ravel()
    strike = float(strike)
    n = w.size

    def func(s, x):
        s = np.asarray(s, dtype=float)
        out = np.maximum(s @ w - strike, 0.0)
        lead = np.broadcast_shapes(s.shape[:-1], np.shape(x)[:-1])
        return np.broadcast_to(out, lead).astype(float)

    return Payoff(func=func, n=n, d=d, grad_x=lambda s, x: _zeros_like_lead(s, x, d),
                  regularity=CONTINUOUS, q=1, depends_on_x=False, name="spread_call",
                  spec={"name": "spread_call", "strike": strike, "weights": w.tolist()})


def make_forward_payoff(g: ScarcityFunction, n_fuels=2, cap=None):
    """Electricity forward on the fuel stack.

    Nontraded coordinates are ``x = (c^1, ..., c^n, y)``: capacities then
    demand. With ``C_i = c^1 + ... + c^i`` the payoff is
    ``g(C_n - y) * sum_j s^j 1{y > C_{j-1}}``, i.e. spreads of all fuels up to
    the marginal one. For two fuels this is ``g(c1 + c2 - y)(s1 + s2 1{y > c1})``.
    ``cap`` returns the bounded variant ``min(f, cap)``.
    """
    n = int(n_fuels)
    if n < 1:
        raise ModelValidationError("need at least one fuel")
    d = n + 1
    loci = []
    for j in range(1, n):
        normal = np.zeros(d)
        normal[:j] = -1.0
        normal[-1] = 1.0
        loci.append(Hyperplane(normal, 0.0))

    def func(s, x):
        s = np.asarray(s, dtype=float)
        x = np.asarray(x, dtype=float)
        caps = np.cumsum(x[..., :n], axis=-1)
        y = x[..., n]
        total = s[..., 0] + 0.0 * y
        for j in range(1, n):
            total = total + s[..., j] * (y - caps[..., j - 1] > 0)
        out = g(caps[..., -1] - y) * total
        if cap is not None:
            out = np.minimum(out, cap)
        return out

    gmin = float(np.min(g(np.linspace(-50, 50, 20001))))
    spec = {"name": "power_forward" if cap is None else "capped_power_forward",
            "n_fuels": n, "scarcity": g.spec}
    if cap is not None:
        spec["cap"] = float(cap)
    bound = None if cap is None else max(abs(float(cap)), 0.0)
    return Payoff(func=func, n=n, d=d, regularity=DISCONTINUOUS if n > 1 else CONTINUOUS, q=1,
                  bounded_in_x=True, bounded_below=gmin >= 0, bound=bound,
                  loci=tuple(loci) if n > 1 else (), name=spec["name"], spec=spec)


def smooth_product(amplitude=1.0, scale=1.0):
    """``A * s/(1+s) * (1 + tanh(x/scale))`` on one traded and one nontraded asset.

    Bounded with bounded derivatives; the standard smooth benchmark.
    """
    A, c = float(amplitude), float(scale)

    def func(s, x):
        s1 = np.asarray(s, dtype=float)[..., 0]
        x1 = np.asarray(x, dtype=float)[..., 0]
        return A * s1 / (1.0 + s1) * (1.0 + np.tanh(x1 / c))

    def gs(s, x):
        s1 = np.asarray(s, dtype=float)[..., 0]
        x1 = np.asarray(x, dtype=float)[..., 0]
        return (A / (1.0 + s1) ** 2 * (1.0 + np.tanh(x1 / c)))[..., None]

    def gx(s, x):
        s1 = np.asarray(s, dtype=float)[..., 0]
        x1 = np.asarray(x, dtype=float)[..., 0]
        return (A * s1 / (1.0 + s1) / (c * np.cosh(x1 / c) ** 2))[..., None]

    return Payoff(func=func, n=1, d=1, grad_s=gs, grad_x=gx, q=0, bound=2.0 * abs(A),
                  name="smooth_product", spec={"name": "smooth_product", "amplitude": A, "scale": c})


def tanh_x(n, d, amplitude=1.0, scale=1.0, index=0, shift=0.0, offset=0.0):
    """Bounded smooth claim ``offset + A tanh((x_index - shift)/scale)`` on one nontraded asset."""
    A, c, sh, off = float(amplitude), float(scale), float(shift), float(offset)

    def func(s, x):
        x = np.asarray(x, dtype=float)
        out = off + A * np.tanh((x[..., index] - sh) / c)
        lead = np.broadcast_shapes(np.shape(s)[:-1], x.shape[:-1])
        return np.broadcast_to(out, lead).astype(float)

    def gx(s, x):
        x = np.asarray(x, dtype=float)
        out = _zeros_like_lead(s, x, d)
        out[..., index] = A / (c * np.cosh((x[..., index] - sh) / c) ** 2)
        return out

    return Payoff(func=func, n=n, d=d, grad_s=lambda s, x: _zeros_like_lead(s, x, n), grad_x=gx,
                  q=0, bound=abs(off) + abs(A), depends_on_s=False, name="tanh_x",
                  spec={"name": "tanh_x", "amplitude": A, "scale": c, "index": int(index), "shift": sh,
                        "offset": off})


def linear_in_s(amplitude=1.0, tilt=0.5, scale=1.0):
    """``A s (1 + tilt tanh(x/scale))``: linear in ``s`` for every ``x``."""
    A, k, c = float(amplitude), float(tilt), float(scale)

    def func(s, x):
        s1 = np.asarray(s, dtype=float)[..., 0]
        x1 = np.asarray(x, dtype=float)[..., 0]
        return A * s1 * (1.0 + k * np.tanh(x1 / c))

    def gs(s, x):
        x1 = np.asarray(x, dtype=float)[..., 0]
        s1 = np.asarray(s, dtype=float)[..., 0]
        return (A * (1.0 + k * np.tanh(x1 / c)) + 0.0 * s1)[..., None]

    def gx(s, x):
        s1 = np.asarray(s, dtype=float)[..., 0]
        x1 = np.asarray(x, dtype=float)[..., 0]
        return (A * s1 * k / (c * np.cosh(x1 / c) ** 2))[..., None]

    return Payoff(func=func, n=1, d=1, grad_s=gs, grad_x=gx, q=1, bounded_below=A * (1 - abs(k)) >= 0,
                  name="linear_in_s", spec={"name": "linear_in_s", "amplitude": A, "tilt": k, "scale": c})


BUILTINS = ("constant", "linear", "digital", "call", "spread_call", "power_forward",
            "capped_power_forward", "smooth_product", "tanh_x", "linear_in_s")


def payoff_from_config(cfg, n, d) -> Payoff:
    """Build a payoff from its configuration dictionary."""
    if not isinstance(cfg, dict) or "name" not in cfg:
        raise ModelValidationError("payoff: expected a mapping with a 'name' field")
    name = cfg["name"]
    try:
        if name == "constant":
            return constant(cfg.get("value", 0.0), n, d)
        if name == "linear":
            return linear(n, d, cfg.get("ws"), cfg.get("wx"), cfg.get("c", 0.0))
        if name == "digital":
            return digital(n, d, cfg.get("index", 0), cfg.get("threshold", 0.0), cfg.get("amount", 1.0))
        if name == "call":
            return call(n, d, cfg["strike"], cfg.get("index", 0))
        if name == "spread_call":
            p = make_spread_call(cfg.get("strike", 0.0), cfg["weights"], d)
            if p.n != n:
                raise ModelValidationError(f"payoff.weights: expected {n} weights, got {p.n}")
            return p
        if name in ("power_forward", "capped_power_forward"):
            g = scarcity_from_config(cfg.get("scarcity"))
            cap = cfg.get("cap") if name == "capped_power_forward" else None
            if name == "capped_power_forward" and cap is None:
                raise ModelValidationError("payoff.cap: required for capped_power_forward")
            p = make_forward_payoff(g, cfg.get("n_fuels", n), cap=cap)
            if (p.n, p.d) != (n, d):
                raise ModelValidationError(f"payoff: forward on {p.n} fuels needs (n, d)=({p.n}, {p.d})")
            return p
        if name == "smooth_product":
            return smooth_product(cfg.get("amplitude", 1.0), cfg.get("scale", 1.0))
        if name == "tanh_x":
            return tanh_x(n, d, cfg.get("amplitude", 1.0), cfg.get("scale", 1.0), cfg.get("index", 0),
                          cfg.get("shift", 0.0), cfg.get("offset", 0.0))
        if name == "linear_in_s":
            return linear_in_s(cfg.get("amplitude", 1.0), cfg.get("tilt", 0.5), cfg.get("scale", 1.0))
    except KeyError as exc:
        raise ModelValidationError(f"payoff.{exc.args[0]}: required field missing") from None
    raise ModelValidationError(f"payoff.name: unknown payoff {name!r}; built-ins are {', '.join(BUILTINS)}")
