"""Reaction vector fields ``(f, g)`` and falsification checks of their structure.

A model maps a state ``z`` of shape ``(m, ...)`` to bulk rates ``f(z)`` and
boundary fluxes ``g(z)`` of the same shape. The checkers sample the
nonnegative orthant (a box ``[0, R]^m``), so a ``"pass"`` verdict means no
counterexample was found, while a ``"fail"`` always carries a witness that
reproduces the violation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from . import expressions
from .errors import ModelEvaluationError, ValidationError

QP_TOL = 1e-12


class NegativeInputWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Certificate:
    """Admissibility constants known for a model (all optional)."""

    b: tuple | None = None
    L1: float | None = None
    K: float | None = None
    L_a: Callable | None = None
    K_fg: float | None = None
    degree: int | None = None


@dataclass(frozen=True, eq=False)
class ReactionModel:
    name: str
    m: int
    f: Callable
    g: Callable
    d: tuple
    meta: Certificate | None = None
    constants: dict = field(default_factory=dict)
    f_exprs: tuple | None = None
    g_exprs: tuple | None = None
    builtin: str | None = None

    def __post_init__(self):
        d = tuple(float(x) for x in self.d)
        object.__setattr__(self, "d", d)
        if self.m < 1 or len(d) != self.m:
            raise ValidationError(f"need one diffusivity per component ({self.m}), got {len(d)}")
        if any(not x > 0 for x in d):
            raise ValidationError("diffusivities must be positive")

    def with_diffusivities(self, d):
        return ReactionModel(
            self.name, self.m, self.f, self.g, tuple(d), self.meta,
            dict(self.constants), self.f_exprs, self.g_exprs, self.builtin,
        )


@dataclass
class ConditionReport:
    condition: str
    verdict: str  # "pass" | "fail" | "inconclusive"
    witness: np.ndarray | None = None
    constants: dict = field(default_factory=dict)
    domain: str = ""
    detail: str = ""

    @property
    def passed(self):
        return self.verdict == "pass"

    def as_dict(self):
        return {
            "condition": self.condition,
            "verdict": self.verdict,
            "witness": None if self.witness is None else [float(x) for x in self.witness],
            "constants": {k: _jsonable(v) for k, v in self.constants.items()},
            "domain": self.domain,
            "detail": self.detail,
        }


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


# -- evaluation -------------------------------------------------------------


def _evaluate(fn, model, z, label):
    z = np.asarray(z, dtype=float)
    if z.shape[:1] != (model.m,):
        raise ValidationError(f"state must have leading axis of length {model.m}")
    if np.any(z < 0):
        warnings.warn(f"{label} evaluated at negative input", NegativeInputWarning, stacklevel=3)
    out = np.asarray(fn(z), dtype=float)
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out.reshape(model.m, -1)))[0][1]
        where = z.reshape(model.m, -1)[:, bad]
        raise ModelEvaluationError(f"{label} not finite at z={where.tolist()}", z=where)
    return out


def eval_f(model, z):
    return _evaluate(model.f, model, z, "f")


def eval_g(model, z):
    return _evaluate(model.g, model, z, "g")


# -- built-in models --------------------------------------------------------


def _zeros_like(z):
    return np.zeros_like(np.asarray(z, dtype=float))


def brusselator_surface(alpha=1.0, beta=2.0, d=(1.0, 1.0)):
    """Diffusion in the bulk, Brusselator kinetics on the surface."""
    alpha, beta = float(alpha), float(beta)

    def g(z):
        u1, u2 = z[0], z[1]
        cubic = u2 * u2 * u1
        return np.stack([alpha * u2 - cubic, beta - (alpha + 1.0) * u2 + cubic])

    return ReactionModel(
        "brusselator-surface", 2, _zeros_like, g, d,
        meta=Certificate(
            b=(1.0, 1.0), L1=beta, K=1.0,
            L_a=lambda a: max(beta, alpha * a[0]), degree=3,
        ),
        constants={"alpha": alpha, "beta": beta},
        builtin="brusselator-surface",
    )


def reversible_reaction(kf=1.0, kr=1.0, d=(1.0, 1.0, 1.0)):
    """Surface reaction R1 + R2 <-> P1 with mass-action rates."""
    kf, kr = float(kf), float(kr)

    def g(z):
        rate = kf * z[0] * z[1] - kr * z[2]
        return np.stack([-rate, -rate, rate])

    return ReactionModel(
        "reversible-reaction", 3, _zeros_like, g, d,
        meta=Certificate(b=(0.5, 0.5, 1.0), L1=0.0, degree=2),
        constants={"kf": kf, "kr": kr},
        builtin="reversible-reaction",
    )


def example3(alpha=1.0, beta=1.0, d=(1.0, 1.0)):
    """Surface field without a linear intermediate-sums bound in every direction."""
    alpha, beta = float(alpha), float(beta)

    def g(z):
        u1, u2 = z[0], z[1]
        sq = u2 * u2
        return np.stack([alpha * u1 * sq * u2 - u1 * sq, u1 * sq - beta * u1 * sq * sq * sq])

    return ReactionModel(
        "example3", 2, _zeros_like, g, d,
        # a*g1 + g2 <= u1 (a alpha)^2 / (4 beta) for a >= 1
        meta=Certificate(K=1.0, L_a=lambda a: (a[0] * alpha) ** 2 / (4.0 * beta), degree=7),
        constants={"alpha": alpha, "beta": beta},
        builtin="example3",
    )


BUILTINS = {
    "brusselator-surface": brusselator_surface,
    "reversible-reaction": reversible_reaction,
    "example3": example3,
}


def builtin(name, constants=None, d=None):
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValidationError(f"unknown builtin model {name!r}") from None
    kwargs = dict(constants or {})
    if d is not None:
        kwargs["d"] = tuple(d)
    try:
        return factory(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"bad constants for {name}: {exc}") from None


def from_expressions(f, g, d, constants=None, name="user"):
    """Model from expression strings in ``u1 ... um`` and named constants."""
    f, g = tuple(f), tuple(g)
    m = len(g)
    if len(f) != m:
        raise ValidationError("f and g need the same number of components")
    names = [f"u{i + 1}" for i in range(m)]
    fc = [expressions.compile_expr(expressions.parse(e, names, constants), names) for e in f]
    gc = [expressions.compile_expr(expressions.parse(e, names, constants), names) for e in g]

    def stacker(funcs):
        def evaluate(z):
            z = np.asarray(z, dtype=float)
            return np.stack([fn(*z) for fn in funcs])
        return evaluate

    return ReactionModel(
        name, m, stacker(fc), stacker(gc), d,
        constants=dict(constants or {}), f_exprs=f, g_exprs=g,
    )


def zero_model(m, d=None):
    return ReactionModel("zero", m, _zeros_like, _zeros_like, d or (1.0,) * m,
                         meta=Certificate(L1=0.0, K_fg=0.0, degree=0))


# -- sampling and checks ----------------------------------------------------


def sample_box(m, R, samples=10_000, seed=0):
    """Low-discrepancy points in ``[0, R]^m`` plus every coordinate slice.

    Returns an array of shape ``(m, N)`` that always contains the origin.
    """
    base = qmc.Halton(d=m, scramble=True, seed=seed).random(int(samples)).T * R
    parts = [np.zeros((m, 1)), base]
    for i in range(m):
        sl = base.copy()
        sl[i] = 0.0
        parts.append(sl)
    return np.concatenate(parts, axis=1)


def _domain(m, R, samples):
    return f"[0, {R:g}]^{m}, {samples} Halton points + coordinate slices"


def check_quasi_positivity(model, R=10.0, samples=10_000, tol=QP_TOL, seed=0):
    """``f_i(z), g_i(z) >= 0`` whenever ``z >= 0`` with ``z_i = 0``."""
    if not R > 0:
        raise ValidationError("box radius must be positive")
    pts = sample_box(model.m, R, samples, seed)
    worst = (0.0, None, "")
    for i in range(model.m):
        z = pts.copy()
        z[i] = 0.0
        for label, fn in (("f", model.f), ("g", model.g)):
            vals = np.asarray(fn(z), dtype=float)[i]
            k = int(np.argmin(vals))
            if vals[k] < -tol and vals[k] < worst[0]:
                worst = (float(vals[k]), z[:, k].copy(), f"{label}_{i + 1}")
    if worst[1] is not None:
        return ConditionReport(
            "V_QP", "fail", witness=worst[1],
            constants={"component": worst[2], "value": worst[0]},
            domain=_domain(model.m, R, samples),
            detail=f"{worst[2]} = {worst[0]:.3g} < 0 on the face z_i = 0",
        )
    return ConditionReport("V_QP", "pass", domain=_domain(model.m, R, samples),
                           detail="no violation found by sampling")


def _linear_bound(model, weights, R, samples, seed, growth=10.0):
    """Smallest L with sum w f, sum w g <= L (sum z + 1) on the sample set."""
    w = np.asarray(weights, dtype=float)[:, None]

    def ratios(radius):
        z = sample_box(model.m, radius, samples, seed)
        combo = np.maximum(np.sum(w * model.f(z), axis=0), np.sum(w * model.g(z), axis=0))
        return z, combo / (np.sum(z, axis=0) + 1.0)

    z, r = ratios(R)
    L = max(float(r.max()), 0.0)
    zb, rb = ratios(growth * R)
    k = int(np.argmax(rb))
    grew = rb[k] > 2.0 * L + 1e-9
    return L, float(rb[k]), (zb[:, k].copy() if grew else None)


def check_intermediate_sums(model, b=None, R=10.0, samples=10_000, seed=0):
    """Fit ``L1`` in ``sum b_j f_j, sum b_j g_j <= L1 (sum z + 1)``."""
    b = np.ones(model.m) if b is None else np.asarray(b, dtype=float)
    if b.shape != (model.m,) or np.any(b <= 0):
        raise ValidationError("weights b must be a positive m-vector")
    L1, L_big, witness = _linear_bound(model, b, R, samples, seed)
    domain = _domain(model.m, R, samples)
    if witness is not None:
        return ConditionReport(
            "V_L1", "fail", witness=witness, constants={"L1": L1, "ratio_at_10R": L_big},
            domain=domain, detail="weighted sum grows faster than linearly",
        )
    return ConditionReport("V_L1", "pass", constants={"L1": L1, "b": b.tolist()}, domain=domain)


def check_VL(model, K, a_vectors, R=10.0, samples=10_000, seed=0):
    """Fit ``L_a`` for each weight vector ``a`` (last entry 1, others >= K)."""
    fitted, failures = {}, []
    for a in a_vectors:
        a = np.asarray(a, dtype=float)
        if a.shape != (model.m,) or a[-1] != 1.0 or np.any(a[:-1] < K):
            raise ValidationError(f"a={a.tolist()} must end in 1 with other entries >= K={K}")
        L, L_big, witness = _linear_bound(model, a, R, samples, seed)
        fitted[tuple(a.tolist())] = L
        if witness is not None:
            failures.append((a, witness, L_big))
    domain = _domain(model.m, R, samples)
    if failures:
        a, witness, L_big = failures[0]
        return ConditionReport(
            "V_L", "fail", witness=witness,
            constants={"K": K, "L_a": fitted, "failing_a": a.tolist(), "ratio_at_10R": L_big},
            domain=domain, detail="no linear bound along a ray",
        )
    return ConditionReport("V_L", "pass", constants={"K": K, "L_a": fitted}, domain=domain)


def check_polynomial_bound(model, R_sequence=(10.0, 100.0, 1000.0), samples=10_000,
                           max_degree=12, seed=0):
    """Smallest integer ``l`` with ``|f_i|, |g_i| <= K_fg (sum z + 1)^l``.

    Absolute values are bounded (a stronger requirement than the one-sided
    bound), so ``l`` is the total degree of the dominant monomial.
    """
    R_sequence = tuple(float(r) for r in R_sequence)
    if len(R_sequence) < 2 or any(b <= a for a, b in zip(R_sequence, R_sequence[1:])):
        raise ValidationError("R_sequence must be increasing with at least two entries")
    peaks, bases = [], []
    for R in R_sequence:
        z = sample_box(model.m, R, samples, seed)
        mag = np.maximum(np.abs(model.f(z)), np.abs(model.g(z))).max(axis=0)
        peaks.append(mag)
        bases.append(np.sum(z, axis=0) + 1.0)
    domain = f"R in {list(R_sequence)}, {samples} points each"
    for l in range(max_degree + 1):
        ratios = [float(np.max(p / s**l)) for p, s in zip(peaks, bases)]
        hi, lo = ratios[-1], ratios[-2]
        if hi == 0.0:
            exponent = 0.0
        elif lo == 0.0:
            exponent = math.inf
        else:
            exponent = math.log(hi / lo) / math.log(R_sequence[-1] / R_sequence[-2])
        if exponent < 0.5:
            return ConditionReport(
                "V_Poly", "pass",
                constants={"l": l, "K_fg": max(ratios), "ratios": ratios, "growth_exponent": exponent},
                domain=domain,
            )
    return ConditionReport("V_Poly", "fail", witness=None,
                           constants={"max_degree": max_degree}, domain=domain,
                           detail="no polynomial bound up to max_degree")


def check_compatibility(model, u0, grid, law=None, t=0.0, tol=1e-6):
    """Largest mismatch of ``d_i du0_i/deta = g_i(u0)`` over all faces.

    Uses one-sided second-order differences at the boundary.
    """
    from .grid import trace

    u0 = np.asarray(u0, dtype=float)
    lam = np.ones(grid.n) if law is None else law.scales(t)
    g_tr = [np.asarray(model.g(face_vals), dtype=float) for face_vals in trace(u0, grid)]
    worst = 0.0
    for face, gv in zip(grid.faces, g_tr):
        h = grid.h[face.axis]
        ax = 1 + face.axis
        take = lambda k: np.take(u0, k, axis=ax)
        if face.side < 0:
            dn = -(-3 * take(0) + 4 * take(1) - take(2)) / (2 * h)
        else:
            dn = (3 * take(-1) - 4 * take(-2) + take(-3)) / (2 * h)
        dn = dn / lam[face.axis]
        d = np.asarray(model.d).reshape((-1,) + (1,) * (dn.ndim - 1))
        worst = max(worst, float(np.max(np.abs(d * dn - gv))))
    return worst, worst <= tol
