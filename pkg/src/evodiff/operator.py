"""Pulled-back spatial operator on the reference box.

The evolving-domain problem is solved on the fixed box in the variables
``u(x, t) = c(A(t) x, t)``. There the operator is

    L_i u = d_i * sum_k lambda_k(t)^-2 d^2u/dx_k^2 - a(t) u

with the scaled flux condition ``d_i * (1/lambda_k) du/dx_k * eta_k = g_i(u)``
on the face with outward normal ``eta = +-e_k``.  Flux conditions are imposed
with one ghost layer per face, mirrored through the boundary node:

    u_ghost = u_mirror + 2 h_k lambda_k(t) F,   F = g_i(u_trace) / d_i

which keeps the centred stencil second order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.interpolate import RegularGridInterpolator

from .errors import ContractError, HorizonError, ValidationError
from .grid import integrate_boundary, integrate_bulk, trace

FLUX_CONVENTIONS = ("d-scaled", "unscaled")


@dataclass(frozen=True)
class OperatorContext:
    law: object
    grid: object
    d: tuple
    t: float
    lam: np.ndarray = field(init=False, repr=False)
    inv_sq: np.ndarray = field(init=False, repr=False)
    a: float = field(init=False)

    def __post_init__(self):
        if self.law.n != self.grid.n:
            raise ValidationError(f"growth law has n={self.law.n}, grid has n={self.grid.n}")
        lam = self.law.scales(self.t)
        object.__setattr__(self, "d", tuple(float(x) for x in self.d))
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "inv_sq", 1.0 / lam**2)
        object.__setattr__(self, "a", self.law.dilution_rate(self.t))

    def at(self, t):
        return OperatorContext(self.law, self.grid, self.d, t)

    @property
    def m(self):
        return len(self.d)


def _column(values, ndim):
    return np.asarray(values, dtype=float).reshape((-1,) + (1,) * ndim)


def face_flux(ctx, model, u, convention="d-scaled"):
    """Per-face normal-derivative data ``F`` from the boundary field ``g``."""
    if convention not in FLUX_CONVENTIONS:
        raise ValidationError(f"flux_convention must be one of {FLUX_CONVENTIONS}")
    out = []
    for vals in trace(u, ctx.grid):
        gv = np.asarray(model.g(vals), dtype=float)
        if convention == "d-scaled":
            gv = gv / _column(ctx.d, gv.ndim - 1)
        out.append(gv)
    return out


def close_with_flux(ctx, u, flux):
    """Ghost values for prescribed per-face flux data ``F`` (see module doc)."""
    grid = ctx.grid
    out = []
    for face, F in zip(grid.faces, flux):
        mirror = u[(slice(None),) + face.interior_index(grid.n)]
        out.append(mirror + 2.0 * grid.h[face.axis] * ctx.lam[face.axis] * F)
    return out


def boundary_close(ctx, u, model, convention="d-scaled"):
    """Ghost layer enforcing the model's mass-transport flux on every face."""
    return close_with_flux(ctx, u, face_flux(ctx, model, u, convention))


def homogeneous_ghosts(ctx, u):
    return close_with_flux(ctx, u, [0.0] * len(ctx.grid.faces))


def _check_ghosts(ctx, u, ghosts):
    if ghosts is None or len(ghosts) != len(ctx.grid.faces):
        raise ContractError("ghost values must be closed with boundary_close before apply_L")
    for g in ghosts:
        if g is None or not np.all(np.isfinite(g)):
            raise ContractError("ghost layer missing or not finite")


def laplacian_t(ctx, u, ghosts):
    """``Delta_t u`` at every node for a stack ``u`` of shape ``(m, *grid.shape)``."""
    _check_ghosts(ctx, u, ghosts)
    grid = ctx.grid
    out = np.zeros_like(u)
    for k in range(grid.n):
        ax = 1 + k

        def sl(a, b):
            idx = [slice(None)] * u.ndim
            idx[ax] = slice(a, b)
            return tuple(idx)

        lo, hi = 2 * k, 2 * k + 1  # faces are ordered (axis, low), (axis, high)
        d2 = np.empty_like(u)
        d2[sl(1, -1)] = u[sl(2, None)] - 2.0 * u[sl(1, -1)] + u[sl(None, -2)]
        d2[sl(0, 1)] = u[sl(1, 2)] - 2.0 * u[sl(0, 1)] + np.expand_dims(ghosts[lo], ax)
        d2[sl(-1, None)] = np.expand_dims(ghosts[hi], ax) - 2.0 * u[sl(-1, None)] + u[sl(-2, -1)]
        out += (ctx.inv_sq[k] / grid.h[k] ** 2) * d2
    return out


def apply_L(ctx, u, ghosts, component=None):
    """``d_i Delta_t u_i - a(t) u_i``; all components unless ``component`` given."""
    u = np.asarray(u, dtype=float)
    lap = laplacian_t(ctx, u, ghosts)
    res = _column(ctx.d, u.ndim - 1) * lap - ctx.a * u
    return res if component is None else res[component]


def boundary_source(ctx, flux):
    """Nodal contribution of flux data ``F`` to ``d_i Delta_t u_i``.

    ``apply_L`` with ghosts from ``close_with_flux(F)`` equals the homogeneous
    operator plus this source.
    """
    grid = ctx.grid
    m = ctx.m
    src = np.zeros((m,) + grid.shape)
    d = _column(ctx.d, grid.n - 1)
    for face, F in zip(grid.faces, flux):
        idx = (slice(None),) + face.index(grid.n)
        scale = 2.0 / (ctx.lam[face.axis] * grid.h[face.axis])
        src[idx] += scale * d * np.broadcast_to(F, src[idx].shape)
    return src


def neumann_second_difference(num, h):
    """1-D second difference with mirrored ghosts (homogeneous Neumann)."""
    main = np.full(num, -2.0)
    upper = np.ones(num - 1)
    lower = np.ones(num - 1)
    upper[0] = 2.0
    lower[-1] = 2.0
    return sps.diags([lower, main, upper], [-1, 0, 1], format="csr") / h**2


def axis_operators(grid):
    """Second-difference matrices acting on one axis of a C-ordered field."""
    eye = [sps.identity(k, format="csr") for k in grid.nodes]
    ops = []
    for k in range(grid.n):
        mats = list(eye)
        mats[k] = neumann_second_difference(grid.nodes[k], grid.h[k])
        op = mats[0]
        for mat in mats[1:]:
            op = sps.kron(op, mat, format="csr")
        ops.append(op)
    return ops


def assemble_L(ctx, component, axis_ops=None):
    """Sparse ``d_i Delta_t - a(t)`` with homogeneous ghost closure."""
    axis_ops = axis_ops or axis_operators(ctx.grid)
    size = int(np.prod(ctx.grid.shape))
    mat = sps.csr_matrix((size, size))
    for k, op in enumerate(axis_ops):
        mat = mat + (ctx.d[component] * ctx.inv_sq[k]) * op
    return mat - ctx.a * sps.identity(size, format="csr")


# -- pull-back / push-forward ------------------------------------------------


def pushforward(u, grid, law, t, y):
    """Concentration ``c(y, t) = u(A(t)^-1 y, t)`` by multilinear interpolation."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x = y / law.scales(t)
    ext = np.asarray(grid.extents)
    tol = 1e-12 * max(1.0, float(ext.max()))
    if np.any(x < -tol) or np.any(x > ext + tol):
        raise HorizonError("query point lies outside the evolving domain")
    x = np.clip(x, 0.0, ext)
    interp = RegularGridInterpolator(grid.coords, grid.check_field(u), method="linear")
    out = interp(x)
    return float(out[0]) if out.shape == (1,) else out


def pullback(c, grid, law, t):
    """Sample a callable ``c(y)`` on ``Omega_t`` at the nodes of the reference box."""
    lam = law.scales(t)
    mesh = grid.mesh()
    return np.asarray(c(*[lam[k] * mesh[k] for k in range(grid.n)]), dtype=float)


def evolving_mass(u, grid, law, t, b=None):
    """``J(t) * sum_i b_i int u_i dx`` with the law's Jacobian convention."""
    u = np.asarray(u, dtype=float)
    b = np.ones(u.shape[0]) if b is None else np.asarray(b, dtype=float)
    if np.any(b <= 0):
        raise ValidationError("weights must be positive")
    total = sum(bi * integrate_bulk(ui, grid) for bi, ui in zip(b, u))
    return law.volume_factor(t) * total


def face_measure_factors(grid, law, t, scaling="facewise"):
    """Per-face surface-measure factor of ``Gamma_t`` relative to ``Gamma``.

    ``"facewise"`` is the exact area ratio ``prod_{j != k} lambda_j`` of each
    face; ``"sqrt-det"`` applies ``sqrt(det A(t))`` uniformly.
    """
    lam = law.scales(t)
    if scaling == "sqrt-det":
        return [float(np.sqrt(np.prod(lam)))] * len(grid.faces)
    if scaling == "facewise":
        return [float(np.prod(np.delete(lam, f.axis))) for f in grid.faces]
    raise ValidationError("scaling must be 'sqrt-det' or 'facewise'")


def boundary_mass(u, grid, law, t, b=None, scaling="facewise"):
    u = np.asarray(u, dtype=float)
    b = np.ones(u.shape[0]) if b is None else np.asarray(b, dtype=float)
    weighted = np.tensordot(b, u, axes=1)
    return integrate_boundary(weighted, grid, face_measure_factors(grid, law, t, scaling))
