"""Heat-potential machinery for the diagonal, time-dependent operator.

Everything here works on smooth model boundaries (the two end points of an
interval, or a circle) rather than on the solver's box. Kernels carry an
exponent-denominator mode:

``"4pi"``
    ``4 pi (t - s)`` in every exponent (the default).
``"standard"``
    ``4 (t - s)``, which makes :func:`z0` a genuine heat kernel.

The prefactor ``(4 pi (t - s))^(-n/2)`` of :func:`z0` is the same in both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate

from .errors import HorizonError, ValidationError

MODES = ("4pi", "standard")
GEOMETRIES = ("interval", "circle")
GRADING_RATIO = 0.5
GRADING_LEVELS = 20


@dataclass(frozen=True)
class KernelContext:
    """Dimension, ``A(s)`` sampler, boundary geometry and exponent mode.

    ``A(s) = diag(lambda(s))`` comes from ``law`` when given, otherwise from
    the constant ``scales``. The circle is discretised by ``nodes`` equally
    spaced points with arc-length weights; the interval boundary is its two
    end points with unit (counting) weights.
    """

    n: int
    geometry: str = "circle"
    mode: str = "4pi"
    law: object = None
    scales: tuple | None = None
    radius: float = 1.0
    center: tuple = (0.0, 0.0)
    endpoints: tuple = (0.0, 1.0)
    nodes: int = 32

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.geometry not in GEOMETRIES:
            raise ValidationError(f"geometry must be one of {GEOMETRIES}")
        if self.n not in (1, 2, 3):
            raise ValidationError("n must be 1, 2 or 3")
        if self.law is not None and self.law.n != self.n:
            raise ValidationError("growth law dimension differs from n")
        if self.scales is not None and (len(self.scales) != self.n or min(self.scales) <= 0):
            raise ValidationError("scales must be n positive numbers")
        if self.geometry == "circle" and (self.n != 2 or self.radius <= 0 or self.nodes < 3):
            raise ValidationError("circle geometry needs n=2, radius > 0 and >= 3 nodes")
        if self.geometry == "interval" and (self.n != 1 or not self.endpoints[0] < self.endpoints[1]):
            raise ValidationError("interval geometry needs n=1 and ordered endpoints")

    def A(self, s):
        """Diagonal of ``A(s)``."""
        if self.law is not None:
            return self.law.scales(s)
        if self.scales is not None:
            return np.asarray(self.scales, dtype=float)
        return np.ones(self.n)

    def denominator(self, dt):
        return (4.0 * math.pi if self.mode == "4pi" else 4.0) * dt

    @cached_property
    def boundary(self):
        """``(points (M, n), outward normals (M, n), arc weights (M,))``."""
        if self.geometry == "interval":
            a, b = self.endpoints
            return (np.array([[a], [b]]), np.array([[-1.0], [1.0]]), np.ones(2))
        theta = 2.0 * math.pi * np.arange(self.nodes) / self.nodes
        normals = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        points = np.asarray(self.center, dtype=float) + self.radius * normals
        weights = np.full(self.nodes, 2.0 * math.pi * self.radius / self.nodes)
        return points, normals, weights


def _require_order(s, t):
    if not np.all(np.asarray(t) > np.asarray(s)):
        raise HorizonError("kernels are only defined for t > s")


def _quadratic(ctx, diff, s):
    # <A(s)^-1 diff, diff> along the last axis
    return np.sum(diff * diff / ctx.A(s), axis=-1)


def z0(diff, s, t, ctx, mode=None):
    """Fundamental solution ``Z0(x - y, t, s)`` with ``A`` frozen at ``s``."""
    _require_order(s, t)
    ctx_mode = ctx if mode is None else _with_mode(ctx, mode)
    diff = np.asarray(diff, dtype=float)
    dt = t - s
    pref = 1.0 / ((4.0 * math.pi * dt) ** (ctx.n / 2) * math.sqrt(np.prod(ctx.A(s))))
    return pref * np.exp(-_quadratic(ctx, diff, s) / ctx_mode.denominator(dt))


def _with_mode(ctx, mode):
    return KernelContext(ctx.n, ctx.geometry, mode, ctx.law, ctx.scales, ctx.radius,
                         ctx.center, ctx.endpoints, ctx.nodes)


@dataclass
class FundamentalCheck:
    residual: float
    relative: float
    coefficients: np.ndarray
    mode: str

    @property
    def flagged(self):
        return self.relative > 1e-2


def verify_fundamental(ctx, points, t_values, s=0.0, coefficients="kernel", mode=None, h=1e-3):
    """Finite-difference residual of ``dZ/dt - sum_i c_i d^2Z/dx_i^2``.

    ``coefficients="kernel"`` uses ``c_i = lambda_i(s)``, the operator that
    :func:`z0` actually inverts; ``"delta_t"`` uses ``c_i = 1/lambda_i(s)^2``.
    Returns the absolute maximum and the maximum relative to ``|dZ/dt|``.
    """
    mode = mode or ctx.mode
    lam = ctx.A(s)
    if coefficients == "kernel":
        c = lam
    elif coefficients == "delta_t":
        c = 1.0 / lam**2
    else:
        raise ValidationError("coefficients must be 'kernel' or 'delta_t'")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    worst = scale = 0.0
    for t in np.atleast_1d(t_values):
        Z = lambda x, tt: z0(x, s, tt, ctx, mode)
        zt = (Z(points, t + h) - Z(points, t - h)) / (2 * h)
        lap = np.zeros(len(points))
        for i in range(ctx.n):
            e = np.zeros(ctx.n)
            e[i] = h
            lap += c[i] * (Z(points + e, t) - 2 * Z(points, t) + Z(points - e, t)) / h**2
        worst = max(worst, float(np.max(np.abs(zt - lap))))
        scale = max(scale, float(np.max(np.abs(zt))))
    return FundamentalCheck(worst, worst / scale if scale else 0.0, np.asarray(c), mode)


@dataclass(frozen=True)
class SurfaceConstant:
    n: int
    H0: float
    H0_closed: float
    omega: float
    cn: float

    @property
    def relative_error(self):
        return abs(self.H0 - self.H0_closed) / self.H0_closed


def unit_sphere_area(n):
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def h0_and_cn(n):
    """``H(0) = int_0^inf s^(-n/2-1) exp(-1/(4s)) ds`` by quadrature; ``c_n = omega_n H(0) / 2``."""
    if n not in (1, 2, 3):
        raise ValidationError("n must be 1, 2 or 3")
    f = lambda s: s ** (-n / 2 - 1) * math.exp(-1.0 / (4.0 * s))
    # split where the integrand peaks so both pieces are resolved
    peak = 1.0 / (2.0 * n + 4.0)
    parts = [
        integrate.quad(f, 0.0, peak, epsabs=0.0, epsrel=1e-13, limit=200)[0],
        integrate.quad(f, peak, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)[0],
        integrate.quad(f, 1.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)[0],
    ]
    H0 = math.fsum(parts)
    closed = 2.0**n * math.gamma(n / 2)
    omega = unit_sphere_area(n)
    return SurfaceConstant(n, H0, closed, omega, omega * H0 / 2.0)


def w_kernel(dt, x, Q, ctx, s=0.0):
    """Single-layer kernel ``exp(-<A^-1 (x-Q), x-Q> / den) / (sqrt(det A) dt^(n/2+1))``."""
    dt = np.asarray(dt, dtype=float)
    if np.any(dt <= 0):
        raise HorizonError("w_kernel needs t - s > 0")
    diff = np.asarray(x, dtype=float) - np.asarray(Q, dtype=float)
    pref = 1.0 / (math.sqrt(np.prod(ctx.A(s))) * dt ** (ctx.n / 2 + 1))
    return pref * np.exp(-_quadratic(ctx, diff, s) / ctx.denominator(dt))


def _double_layer(ctx, Qi, yj, t, s):
    """Kernel of ``J`` for collocation points ``Qi`` and sources ``yj``.

    Shapes broadcast: ``Qi`` (..., n), ``yj`` (..., n); ``s`` scalar.
    """
    points, normals, _ = ctx.boundary
    lam = ctx.A(s)
    diff = yj - points[Qi]
    eta = normals[Qi]
    num = np.sum(diff / lam * eta, axis=-1)
    dt = t - s
    pref = 1.0 / (math.sqrt(np.prod(lam)) * dt ** (ctx.n / 2 + 1))
    return num * pref * np.exp(-np.sum(diff * diff / lam, axis=-1) / ctx.denominator(dt))


def j_epsilon(f, eps, Q, t, ctx, time_nodes=201):
    """Truncated boundary operator ``J_eps(f)(Q, t)``.

    ``f`` is a constant, or ``f(s, y)`` returning values at boundary points
    ``y`` of shape ``(M, n)``. Trapezoid rule in ``s`` on ``[0, t - eps]`` and
    arc-length trapezoid on the boundary. ``Q`` indexes the boundary nodes.
    """
    if not 0 < eps < t:
        raise HorizonError("j_epsilon needs 0 < eps < t")
    points, _, weights = ctx.boundary
    s_nodes = np.linspace(0.0, t - eps, int(time_nodes))
    ws = np.full(len(s_nodes), s_nodes[1] - s_nodes[0])
    ws[0] = ws[-1] = 0.5 * ws[0]
    total = 0.0
    for s, w in zip(s_nodes, ws):
        k = _double_layer(ctx, Q, points, t, s)
        fv = f(s, points) if callable(f) else np.full(len(points), float(f))
        total += w * float(np.dot(weights, k * fv))
    return total


def graded_nodes(a, b, ratio=GRADING_RATIO, levels=GRADING_LEVELS, order=4):
    """Gauss-Legendre nodes and weights on ``[a, b]`` graded towards ``b``."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = [b - (b - a) * ratio**j for j in range(levels + 1)] + [b]
    nodes, wts = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (x + 1.0))
        wts.append(half * w)
    return np.concatenate(nodes), np.concatenate(wts)


def _gauss(a, b, order=8):
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


# -- density solve ------------------------------------------------------------


@dataclass
class VolterraOperator:
    """``-c_n I + J`` for time-piecewise-constant densities.

    Unknowns are ``g[k, j]``, the density on ``(t_{k-1}, t_k]`` at boundary
    node ``j``; rows collocate at ``(Q_i, t_k)``. ``blocks[k][l]`` maps slab
    ``l`` to row slab ``k`` (``l <= k``).
    """

    ctx: KernelContext
    times: np.ndarray
    cn: float
    blocks: list = field(repr=False, default_factory=list)

    @property
    def shape(self):
        M = len(self.ctx.boundary[2])
        K = len(self.times) - 1
        return (K, M)

    def dense(self):
        K, M = self.shape
        out = np.zeros((K * M, K * M))
        for k in range(K):
            for l in range(k + 1):
                out[k * M:(k + 1) * M, l * M:(l + 1) * M] = self.blocks[k][l]
        return out

    def apply(self, g):
        g = np.asarray(g, dtype=float)
        if g.shape != self.shape:
            raise ValidationError(f"density must have shape {self.shape}")
        out = np.zeros_like(g)
        for k in range(g.shape[0]):
            for l in range(k + 1):
                out[k] += self.blocks[k][l] @ g[l]
        return out


def _slab_integral(ctx, t, a, b, graded):
    points, _, weights = ctx.boundary
    M = len(weights)
    nodes, wts = graded_nodes(a, b) if graded else _gauss(a, b)
    block = np.zeros((M, M))
    Qi = np.arange(M)[:, None]
    for s, w in zip(nodes, wts):
        if s >= t:
            continue
        block += w * _double_layer(ctx, Qi, points[None, :, :], t, s)
    return block * weights[None, :]


def discretize_J(ctx, times, cn=None):
    """Assemble ``-c_n I + J`` on the time grid ``times`` (starting at 0).

    The slab containing the collocation time is integrated with geometric
    grading towards ``s = t``; earlier slabs use 8-point Gauss-Legendre.
    """
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise ValidationError("times must start at 0 and increase")
    cn = h0_and_cn(ctx.n).cn if cn is None else float(cn)
    M = len(ctx.boundary[2])
    blocks = []
    for k in range(1, len(times)):
        t = times[k]
        row = []
        for l in range(1, k + 1):
            blk = _slab_integral(ctx, t, times[l - 1], times[l], graded=(l == k))
            if l == k:
                blk = blk - cn * np.eye(M)
            row.append(blk)
        blocks.append(row)
    return VolterraOperator(ctx, times, cn, blocks)


@dataclass
class DensitySolution:
    g: np.ndarray  # (K, M)
    operator: VolterraOperator
    condition: float


def solve_density(gamma, operator):
    """``g = -2 (-c_n I + J)^-1 gamma`` by block forward substitution in time.

    ``gamma`` has shape ``(K, M)``; row ``k`` is the datum at ``t_k``.
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != operator.shape:
        raise ValidationError(f"gamma must have shape {operator.shape}")
    K, M = operator.shape
    g = np.zeros_like(gamma)
    cond = 0.0
    for k in range(K):
        diag_block = operator.blocks[k][k]
        c = np.linalg.cond(diag_block)
        if not np.isfinite(c) or c > 1e14:
            raise np.linalg.LinAlgError(f"diagonal block {k} is numerically singular (cond={c:.3g})")
        cond = max(cond, c)
        rhs = -2.0 * gamma[k]
        for l in range(k):
            rhs = rhs - operator.blocks[k][l] @ g[l]
        g[k] = np.linalg.solve(diag_block, rhs)
    return DensitySolution(g, operator, cond)


def classical_solution(g, x, t, operator):
    """Single-layer potential ``int_0^t int_Gamma W(t-s, x, Q) g(Q, s) dsigma ds``.

    ``g`` is piecewise constant in time on ``operator.times``; the slab
    containing ``t`` is integrated with geometric grading towards ``s = t``.
    """
    ctx = operator.ctx
    times = operator.times
    g = np.asarray(g, dtype=float)
    if t <= 0:
        return 0.0
    if t > times[-1] + 1e-12:
        raise HorizonError("t beyond the density's time grid")
    points, _, weights = ctx.boundary
    x = np.asarray(x, dtype=float).reshape(ctx.n)
    total = 0.0
    for l in range(1, len(times)):
        a, b = times[l - 1], min(times[l], t)
        if b <= a:
            break
        nodes, wts = graded_nodes(a, b) if b == t else _gauss(a, b)
        for s, w in zip(nodes, wts):
            if s >= t:
                continue
            kern = w_kernel(t - s, x[None, :], points, ctx, s)
            total += w * float(np.dot(weights, kern * g[l - 1]))
    return total


def holder_seminorm(points, times, values, a):
    """``max |phi_i - phi_j| / (|t_i - t_j|^(1/2) + |x_i - x_j|)^a`` over sample pairs."""
    if not 0 < a <= 1:
        raise ValidationError("exponent must lie in (0, 1]")
    X = np.asarray(points, dtype=float)
    X = X.reshape(len(X), -1)
    T = np.asarray(times, dtype=float)
    V = np.asarray(values, dtype=float)
    dist = np.sqrt(np.abs(T[:, None] - T[None, :])) + np.linalg.norm(X[:, None] - X[None, :], axis=-1)
    num = np.abs(V[:, None] - V[None, :])
    mask = dist > 0
    if not mask.any():
        return 0.0
    return float(np.max(num[mask] / dist[mask] ** a))


def maximal_ratio(ctx, family, eps_values, t_grid, p=2, time_nodes=101):
    """``sup_eps ||J_eps f||_p / ||f||_p`` over a family of boundary densities.

    Norms are discrete over the boundary nodes and ``t_grid`` with arc and
    uniform time weights; ``J_eps f`` is evaluated only where ``t > eps``.
    Returns one ratio per member of ``family``.
    """
    points, _, weights = ctx.boundary
    t_grid = np.asarray(t_grid, dtype=float)
    out = []
    for f in family:
        fnorm = sum(np.dot(weights, np.abs(f(t, points)) ** p) for t in t_grid) ** (1 / p)
        best = 0.0
        for eps in eps_values:
            acc = 0.0
            for t in t_grid:
                if t <= eps:
                    continue
                vals = np.array([j_epsilon(f, eps, q, t, ctx, time_nodes) for q in range(len(points))])
                acc += np.dot(weights, np.abs(vals) ** p)
            best = max(best, acc ** (1 / p) / fnorm)
        out.append(best)
    return out
