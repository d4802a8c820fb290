"""Dilational domain-evolution laws ``y(x, t) = A(t) x`` with diagonal ``A``.

A :class:`GrowthLaw` supplies the per-axis scale factors ``lambda_i(t)``, the
volume factor used to weight integrals on the evolving domain and the dilution
rate ``a(t)``, the logarithmic derivative of that volume factor.

Two Jacobian conventions are supported. ``"paper-sqrt"`` (default) uses
``sqrt(prod lambda_i)`` as the volume factor; ``"standard-det"`` uses the
usual change-of-variables factor ``prod lambda_i``. Switching modes doubles
``a(t)`` exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import sympy as sp
from scipy.interpolate import PchipInterpolator

from . import expressions
from .errors import AdmissibilityError, HorizonError, ValidationError

KINDS = (
    "static",
    "isotropic-exponential",
    "isotropic-logistic",
    "per-axis-analytic",
    "tabulated",
)
JACOBIAN_MODES = ("paper-sqrt", "standard-det")


class ReducedAccuracyWarning(UserWarning):
    """A tabulated derivative fell back to a one-sided difference."""


@dataclass(frozen=True)
class GrowthBounds:
    """Empirical bounds ``Lambda1 <= 1/lambda_i^2 <= Lambda2``, ``k1 <= a <= k2``."""

    Lambda1: float
    Lambda2: float
    k1: float
    k2: float

    @property
    def k1_relaxed(self):
        # the strict k1 > 0 hypothesis is replaced by k1 >= 0
        return self.k1 <= 0.0


@dataclass(frozen=True)
class GrowthLaw:
    """Immutable growth law on ``[0, horizon]``.

    Prefer the constructors :meth:`static`, :meth:`exponential`,
    :meth:`logistic`, :meth:`per_axis` and :meth:`tabulated`.
    """

    kind: str
    n: int
    horizon: float
    rho: float = 0.0
    saturation: float | None = None
    expressions: tuple | None = None
    table_times: tuple | None = None
    table_scales: tuple | None = None
    jacobian: str = "paper-sqrt"
    fd_step: float | None = None
    _impl: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown growth kind {self.kind!r}")
        if self.n not in (1, 2, 3):
            raise ValidationError(f"spatial dimension must be 1, 2 or 3, got {self.n}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValidationError("horizon must be a positive finite time")
        if self.jacobian not in JACOBIAN_MODES:
            raise ValidationError(f"jacobian must be one of {JACOBIAN_MODES}")
        object.__setattr__(self, "_impl", self._build())

    # -- constructors -----------------------------------------------------

    @classmethod
    def static(cls, n, horizon, **kw):
        return cls("static", n, horizon, **kw)

    @classmethod
    def exponential(cls, rho, n, horizon, **kw):
        """Isotropic ``lambda(t) = exp(rho t)``."""
        return cls("isotropic-exponential", n, horizon, rho=float(rho), **kw)

    @classmethod
    def logistic(cls, rho, saturation, n, horizon, **kw):
        """Isotropic logistic growth from 1 towards ``saturation``."""
        return cls(
            "isotropic-logistic", n, horizon, rho=float(rho), saturation=float(saturation), **kw
        )

    @classmethod
    def per_axis(cls, exprs, horizon, **kw):
        """One closed-form expression in ``t`` per axis, e.g. ``("1+t", "1")``."""
        exprs = tuple(str(e) for e in exprs)
        return cls("per-axis-analytic", len(exprs), horizon, expressions=exprs, **kw)

    @classmethod
    def tabulated(cls, times, scales, horizon=None, **kw):
        """Samples ``scales[k, i] = lambda_i(times[k])``, monotone-cubic interpolated."""
        times = np.asarray(times, dtype=float)
        scales = np.asarray(scales, dtype=float)
        if scales.ndim == 1:
            scales = scales[:, None]
        horizon = float(times[-1]) if horizon is None else float(horizon)
        return cls(
            "tabulated",
            scales.shape[1],
            horizon,
            table_times=tuple(times.tolist()),
            table_scales=tuple(map(tuple, scales.tolist())),
            **kw,
        )

    def with_jacobian(self, mode):
        return GrowthLaw(
            self.kind,
            self.n,
            self.horizon,
            rho=self.rho,
            saturation=self.saturation,
            expressions=self.expressions,
            table_times=self.table_times,
            table_scales=self.table_scales,
            jacobian=mode,
            fd_step=self.fd_step,
        )

    # -- internals --------------------------------------------------------

    def _build(self):
        n = self.n
        if self.kind == "static":
            return (lambda t: np.ones(n), lambda t: np.zeros(n))
        if self.kind == "isotropic-exponential":
            rho = self.rho
            return (
                lambda t: np.full(n, math.exp(rho * t)),
                lambda t: np.full(n, rho * math.exp(rho * t)),
            )
        if self.kind == "isotropic-logistic":
            rho, cap = self.rho, self.saturation
            if cap is None or cap <= 0:
                raise ValidationError("logistic growth needs a positive saturation")

            def lam(t):
                return np.full(n, cap / (1.0 + (cap - 1.0) * math.exp(-rho * t)))

            def dlam(t):
                value = cap / (1.0 + (cap - 1.0) * math.exp(-rho * t))
                return np.full(n, rho * value * (1.0 - value / cap))

            return lam, dlam
        if self.kind == "per-axis-analytic":
            if not self.expressions or len(self.expressions) != n:
                raise ValidationError("per-axis law needs one expression per axis")
            t = sp.Symbol("t", real=True)
            parsed = [expressions.parse(e, ["t"]) for e in self.expressions]
            for e in parsed:
                if sp.simplify(e.subs(t, 0) - 1) != 0:
                    raise ValidationError(f"lambda(0) must equal 1, got {e.subs(t, 0)}")
            funcs = [expressions.compile_expr(e, ["t"]) for e in parsed]
            derivs = [expressions.compile_expr(sp.diff(e, t), ["t"]) for e in parsed]
            return (
                lambda s: np.array([float(f(s)) for f in funcs]),
                lambda s: np.array([float(f(s)) for f in derivs]),
            )
        return self._build_tabulated()

    def _build_tabulated(self):
        times = np.asarray(self.table_times, dtype=float)
        scales = np.asarray(self.table_scales, dtype=float)
        if times.ndim != 1 or len(times) < 2 or scales.shape != (len(times), self.n):
            raise ValidationError("table must have >= 2 rows and one column per axis")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("table times must be strictly increasing")
        if np.any(scales <= 0) or not np.all(np.isfinite(scales)):
            bad = int(np.argwhere(~(scales > 0))[0][0]) if np.any(~(scales > 0)) else 0
            raise ValidationError(f"non-positive scale sample at t={times[bad]}")
        if times[0] != 0.0 or not np.allclose(scales[0], 1.0, rtol=0, atol=1e-12):
            raise ValidationError("table must start at t=0 with all scales equal to 1")
        if times[-1] < self.horizon - 1e-12:
            raise ValidationError("table does not cover the horizon")
        interp = PchipInterpolator(times, scales, axis=0)
        step = self.fd_step or float(np.min(np.diff(times)))
        t0, t1 = times[0], times[-1]

        def lam(t):
            return np.asarray(interp(t), dtype=float)

        def dlam(t):
            if t - step >= t0 and t + step <= t1:
                return (lam(t + step) - lam(t - step)) / (2.0 * step)
            warnings.warn(
                f"one-sided difference for tabulated derivative at t={t}",
                ReducedAccuracyWarning,
                stacklevel=3,
            )
            if t - step < t0:
                return (lam(t + step) - lam(t)) / step
            return (lam(t) - lam(t - step)) / step

        return lam, dlam

    def _check_time(self, t):
        t = float(t)
        tol = 1e-12 * max(1.0, self.horizon)
        if not (-tol <= t <= self.horizon + tol) or not math.isfinite(t):
            raise HorizonError(f"t={t} outside [0, {self.horizon}]")
        return min(max(t, 0.0), self.horizon)

    # -- public evaluation -----------------------------------------------

    @property
    def jacobian_power(self):
        return 0.5 if self.jacobian == "paper-sqrt" else 1.0

    def scales(self, t):
        t = self._check_time(t)
        if t == 0.0:
            return np.ones(self.n)
        return self._impl[0](t)

    def scale_rates(self, t):
        return self._impl[1](self._check_time(t))

    def volume_factor(self, t):
        return float(np.prod(self.scales(t)) ** self.jacobian_power)

    def log_volume_factor(self, t):
        """``log J(t)``, i.e. the exact integral of ``a`` over ``[0, t]``."""
        return self.jacobian_power * float(np.sum(np.log(self.scales(t))))

    def dilution_rate(self, t):
        lam = self.scales(t)
        return self.jacobian_power * float(np.sum(self.scale_rates(t) / lam))

    def inverse_square_scales(self, t):
        return 1.0 / self.scales(t) ** 2


def scales(law, t):
    return law.scales(t)


def volume_factor(law, t):
    return law.volume_factor(t)


def dilution_rate(law, t):
    return law.dilution_rate(t)


def verify_bounds(law, samples=200, t0=0.0, t1=None):
    """Empirical ``Lambda1, Lambda2, k1, k2`` on a uniform sample of ``[t0, t1]``.

    Raises :class:`AdmissibilityError` naming the first offending time when a
    scale is non-positive or ``a(t)`` is not finite.
    """
    if samples < 2:
        raise ValidationError("verify_bounds needs at least 2 samples")
    t1 = law.horizon if t1 is None else t1
    inv_sq, rates = [], []
    for t in np.linspace(t0, t1, int(samples)):
        lam = law.scales(t)
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise AdmissibilityError(f"non-positive or non-finite scale at t={t}", t=t)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ReducedAccuracyWarning)
            a = law.dilution_rate(t)
        if not math.isfinite(a):
            raise AdmissibilityError(f"dilution rate not finite at t={t}", t=t)
        inv_sq.append(1.0 / lam**2)
        rates.append(a)
    inv_sq = np.concatenate(inv_sq)
    return GrowthBounds(
        Lambda1=float(inv_sq.min()),
        Lambda2=float(inv_sq.max()),
        k1=float(min(rates)),
        k2=float(max(rates)),
    )
