"""Structured node grid on the reference box with boundary-face bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ValidationError


def _trapezoid_weights(num, h):
    w = np.full(num, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True)
class Face:
    """One face of the box: nodes with ``x[axis]`` at the low or high end."""

    axis: int
    side: int  # -1 low end, +1 high end
    weights: np.ndarray

    @property
    def normal(self):
        return self.side

    def index(self, ndim):
        """Index tuple selecting this face from an array of ``ndim`` axes."""
        idx = [slice(None)] * ndim
        idx[self.axis] = 0 if self.side < 0 else -1
        return tuple(idx)

    def interior_index(self, ndim):
        """Index of the first interior layer next to the face (ghost mirror)."""
        idx = [slice(None)] * ndim
        idx[self.axis] = 1 if self.side < 0 else -2
        return tuple(idx)

    def unit_normal(self, n):
        e = np.zeros(n)
        e[self.axis] = float(self.side)
        return e


@dataclass(frozen=True)
class Grid:
    """Axis-aligned box ``prod [0, L_i]`` with ``N_i >= 3`` nodes per axis."""

    extents: tuple
    nodes: tuple

    def __post_init__(self):
        extents = tuple(float(e) for e in self.extents)
        nodes = tuple(int(k) for k in self.nodes)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "nodes", nodes)
        if len(extents) != len(nodes) or len(nodes) not in (1, 2, 3):
            raise ValidationError("grid needs 1-3 axes with matching extents and node counts")
        if any(k < 3 for k in nodes):
            raise ValidationError("each axis needs at least 3 nodes")
        if any(not e > 0 for e in extents):
            raise ValidationError("extents must be positive")

    @classmethod
    def unit(cls, n, num):
        return cls((1.0,) * n, (num,) * n)

    @property
    def n(self):
        return len(self.nodes)

    @property
    def shape(self):
        return self.nodes

    @cached_property
    def h(self):
        return tuple(e / (k - 1) for e, k in zip(self.extents, self.nodes))

    @cached_property
    def coords(self):
        return tuple(np.linspace(0.0, e, k) for e, k in zip(self.extents, self.nodes))

    def mesh(self):
        return np.meshgrid(*self.coords, indexing="ij")

    @cached_property
    def weights(self):
        w = np.ones(())
        for k, h in zip(self.nodes, self.h):
            w = np.multiply.outer(w, _trapezoid_weights(k, h))
        return w

    @cached_property
    def faces(self):
        faces = []
        for axis in range(self.n):
            w = np.ones(())
            for other in range(self.n):
                if other != axis:
                    w = np.multiply.outer(w, _trapezoid_weights(self.nodes[other], self.h[other]))
            for side in (-1, 1):
                faces.append(Face(axis, side, w))
        return tuple(faces)

    @property
    def volume(self):
        return float(np.prod(self.extents))

    @property
    def surface_area(self):
        if self.n == 1:
            return 2.0
        total = 0.0
        for axis in range(self.n):
            total += 2.0 * np.prod([e for i, e in enumerate(self.extents) if i != axis])
        return float(total)

    def check_field(self, phi):
        phi = np.asarray(phi, dtype=float)
        if phi.shape != self.shape:
            raise ValidationError(f"field shape {phi.shape} does not match grid {self.shape}")
        return phi


@dataclass
class StateField:
    """``m`` nodal component arrays, stacked on axis 0, at time ``t``."""

    t: float
    u: np.ndarray
    law: object = None

    @property
    def m(self):
        return self.u.shape[0]

    def check(self, overshoot_tol=1e-8):
        if not np.all(np.isfinite(self.u)):
            raise ValidationError("state contains non-finite values")
        return float(self.u.min()) >= -overshoot_tol


def integrate_bulk(phi, grid):
    """Trapezoidal tensor quadrature of a nodal field over the box."""
    phi = grid.check_field(phi)
    return float(np.sum(grid.weights * phi))


def trace(field, grid):
    """Nodal values on every face, in ``grid.faces`` order.

    ``field`` may carry leading component axes, e.g. shape ``(m, *grid.shape)``.
    """
    field = np.asarray(field, dtype=float)
    lead = field.ndim - grid.n
    if lead < 0 or field.shape[lead:] != grid.shape:
        raise ValidationError(f"field shape {field.shape} does not match grid {grid.shape}")
    pre = (slice(None),) * lead
    return [field[pre + face.index(grid.n)] for face in grid.faces]


def integrate_boundary(phi, grid, face_scale=None):
    """Trapezoidal quadrature over the box surface.

    ``phi`` is either a nodal field (its trace is taken) or a list of per-face
    arrays. Edge and corner nodes are counted once per face they belong to,
    each with that face's trapezoid weight. ``face_scale`` optionally
    multiplies each face's contribution.
    """
    if isinstance(phi, (list, tuple)):
        values = phi
    else:
        values = trace(grid.check_field(phi), grid)
    total = 0.0
    for k, (face, vals) in enumerate(zip(grid.faces, values)):
        s = 1.0 if face_scale is None else face_scale[k]
        total += s * float(np.sum(face.weights * vals))
    return total
