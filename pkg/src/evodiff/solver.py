"""Method-of-lines integration of the pulled-back reaction-diffusion system.

Each component obeys ``du_i/dt = d_i Delta_t u_i - a(t) u_i + f_i(u)`` in the
box with the ghost-node flux closure from :mod:`evodiff.operator`. Two
steppers are available:

``"rk4"``
    classical explicit Runge-Kutta, ghosts closed at every stage.
``"imex-cn"``
    Crank-Nicolson for ``d_i Delta_t - a`` (coefficients at the midpoint
    time) with the reaction ``f`` and the boundary flux ``g`` extrapolated
    explicitly by second-order Adams-Bashforth.

Runs stop when the sup norm reaches ``blowup_threshold`` (evidence of a
finite maximal time) or when a component dips below
``-overshoot_tol * (1 + sup)``. Negative values are never clipped.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse import identity
from scipy.sparse.linalg import splu

from . import diagnostics as diag
from .errors import IntegrationError, ValidationError
from .grid import Grid, StateField, integrate_boundary, integrate_bulk
from .growth import GrowthLaw, verify_bounds
from .models import check_compatibility, check_quasi_positivity, zero_model
from .operator import (
    OperatorContext,
    apply_L,
    assemble_L,
    axis_operators,
    boundary_source,
    close_with_flux,
    evolving_mass,
    face_flux,
)

log = logging.getLogger(__name__)

STEPPERS = ("rk4", "imex-cn")
DIAGNOSTIC_COLUMNS = (
    "t", "L1_omega", "L1_gamma", "sup", "min", "evolving_mass", "lyapunov_P",
    "conservation_residual",
)


@dataclass
class Forcing:
    """Prescribed sources for manufactured solutions.

    ``bulk(t)`` returns an ``(m, *grid.shape)`` array added to ``du/dt``;
    ``flux(t)`` returns per-face normal-derivative data added to the model's.
    """

    bulk: Callable | None = None
    flux: Callable | None = None


@dataclass
class RunConfig:
    law: GrowthLaw
    model: object
    grid: Grid
    t_end: float
    u0: object
    stepper: str = "rk4"
    dt: float | str = "auto"
    safety: float = 0.9
    overshoot_tol: float = 1e-8
    blowup_threshold: float | None = None
    snapshot_every: int = 0
    diagnostics_every: int = 1
    flux_convention: str = "d-scaled"
    weights: tuple | None = None
    lyapunov_p: int = 2
    theta: float | None = None
    forcing: Forcing | None = None
    max_steps: int = 10_000_000
    check_model: bool = True

    def initial_state(self):
        u0 = self.u0
        if callable(u0):
            u0 = u0(*self.grid.mesh())
        u0 = np.asarray(u0, dtype=float)
        shape = (self.model.m,) + self.grid.shape
        if u0.shape != shape:
            u0 = np.broadcast_to(
                u0.reshape((-1,) + (1,) * self.grid.n) if u0.ndim == 1 else u0, shape
            )
        return np.array(u0, dtype=float)

    def validate(self):
        errors = []
        if self.stepper not in STEPPERS:
            errors.append(f"stepper must be one of {STEPPERS}")
        if not (0 < self.t_end <= self.law.horizon + 1e-12):
            errors.append(f"t_end={self.t_end} must lie in (0, horizon={self.law.horizon}]")
        if self.law.n != self.grid.n:
            errors.append("growth law and grid dimensions differ")
        if not (isinstance(self.dt, str) and self.dt == "auto") and not (
            isinstance(self.dt, (int, float)) and self.dt > 0
        ):
            errors.append("dt must be 'auto' or a positive number")
        if self.blowup_threshold is not None and not self.blowup_threshold > 0:
            errors.append("blowup_threshold must be positive")
        if errors:
            raise ValidationError("; ".join(errors))


@dataclass
class DiagnosticsRecord:
    t: float
    L1_omega: np.ndarray
    L1_gamma: np.ndarray
    sup: float
    min: float
    evolving_mass: float
    lyapunov_P: float
    conservation_residual: float

    def row(self):
        return [self.t, *self.L1_omega, *self.L1_gamma, self.sup, self.min,
                self.evolving_mass, self.lyapunov_P, self.conservation_residual]


@dataclass
class Trajectory:
    snapshots: list
    records: list
    termination: str  # "completed" | "blowup-detected" | "error"
    message: str = ""
    steps: int = 0
    grid: Grid | None = None
    law: GrowthLaw | None = None
    model: object = None
    weights: tuple | None = None
    wall_time: float = 0.0
    deviations: list = field(default_factory=list)

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    def stack(self):
        return np.stack([s.u for s in self.snapshots])

    @property
    def final(self):
        return self.snapshots[-1]

    @property
    def exit_code(self):
        return {"completed": 0, "blowup-detected": 2}.get(self.termination, 1)

    def min_over_trajectory(self):
        return min(r.min for r in self.records)

    def max_over_trajectory(self):
        return max(r.sup for r in self.records)


# -- time step control --------------------------------------------------------


def stable_dt(law, grid, d, t=0.0, t_end=None, safety=0.9, samples=200):
    """Explicit diffusion bound ``safety / (2 max(d) sum_k Lambda2/h_k^2 + k2)``.

    ``Lambda2`` and ``k2`` are taken from :func:`verify_bounds` over ``[t, t_end]``.
    """
    t_end = law.horizon if t_end is None else t_end
    bounds = verify_bounds(law, samples=samples, t0=t, t1=t_end)
    stiff = 2.0 * max(d) * sum(bounds.Lambda2 / h**2 for h in grid.h)
    return safety / (stiff + max(bounds.k2, 0.0))


def _reaction_stiffness(ctx, model, u, convention):
    """Row-sum bound on the Jacobian of the explicit reaction and flux terms."""
    eps = 1e-7
    rho = 0.0
    m = ctx.m
    base_f = np.asarray(model.f(u), dtype=float)
    jac_f = np.zeros_like(base_f)
    for j in range(m):
        du = eps * (1.0 + np.abs(u[j]))
        up = u.copy()
        up[j] = up[j] + du
        jac_f += np.abs(np.asarray(model.f(up), dtype=float) - base_f) / du
    if np.any(base_f) or np.any(jac_f):
        rho = float(np.max(jac_f))
    base = face_flux(ctx, model, u, convention)
    for face, F0 in zip(ctx.grid.faces, base):
        vals = u[(slice(None),) + face.index(ctx.grid.n)]
        acc = np.zeros_like(F0)
        for j in range(m):
            dv = eps * (1.0 + np.abs(vals[j]))
            pert = vals.copy()
            pert[j] = pert[j] + dv
            gp = np.asarray(model.g(pert), dtype=float)
            if convention == "d-scaled":
                gp = gp / np.asarray(ctx.d).reshape((-1,) + (1,) * (gp.ndim - 1))
            acc += np.abs(gp - F0) / dv
        d = np.asarray(ctx.d).reshape((-1,) + (1,) * (acc.ndim - 1))
        scale = 2.0 / (ctx.lam[face.axis] * ctx.grid.h[face.axis])
        rho = max(rho, float(np.max(scale * d * acc)) if acc.size else 0.0)
    return rho


# -- semi-discrete system -----------------------------------------------------


class SemiDiscrete:
    """Right-hand side of the method-of-lines system for one configuration."""

    def __init__(self, law, grid, model, flux_convention="d-scaled", forcing=None):
        self.law = law
        self.grid = grid
        self.model = model
        self.convention = flux_convention
        self.forcing = forcing or Forcing()

    def context(self, t):
        return OperatorContext(self.law, self.grid, self.model.d, t)

    def flux(self, ctx, u):
        F = face_flux(ctx, self.model, u, self.convention)
        if self.forcing.flux is not None:
            F = [a + b for a, b in zip(F, self.forcing.flux(ctx.t))]
        return F

    def explicit_terms(self, ctx, u):
        out = np.asarray(self.model.f(u), dtype=float).copy()
        if self.forcing.bulk is not None:
            out += self.forcing.bulk(ctx.t)
        return out

    def rhs(self, t, u):
        ctx = self.context(t)
        ghosts = close_with_flux(ctx, u, self.flux(ctx, u))
        return apply_L(ctx, u, ghosts) + self.explicit_terms(ctx, u)


def _rk4(system, t, u, dt):
    k1 = system.rhs(t, u)
    k2 = system.rhs(t + 0.5 * dt, u + 0.5 * dt * k1)
    k3 = system.rhs(t + 0.5 * dt, u + 0.5 * dt * k2)
    k4 = system.rhs(t + dt, u + dt * k3)
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _ImexCN:
    """Crank-Nicolson / Adams-Bashforth-2 stepper with cached factorisations."""

    def __init__(self, system):
        self.system = system
        self.axis_ops = axis_operators(system.grid)
        self.size = int(np.prod(system.grid.shape))
        self.eye = identity(self.size, format="csc")
        self._cache = {}
        self._previous = None

    def reset(self):
        self._previous = None

    def _explicit(self, t, u):
        ctx = self.system.context(t)
        # the flux enters through the boundary source only; forcing.bulk is
        # evaluated at the midpoint separately
        F = face_flux(ctx, self.system.model, u, self.system.convention)
        return np.asarray(self.system.model.f(u), dtype=float) + boundary_source(ctx, F)

    def _prescribed(self, t):
        ctx = self.system.context(t)
        out = np.zeros((ctx.m,) + self.system.grid.shape)
        forcing = self.system.forcing
        if forcing.bulk is not None:
            out += forcing.bulk(t)
        if forcing.flux is not None:
            out += boundary_source(ctx, forcing.flux(t))
        return out

    def _factors(self, ctx, i, dt):
        key = (ctx.d[i], tuple(ctx.inv_sq), ctx.a, dt)
        if key not in self._cache:
            if len(self._cache) > 16:
                self._cache.clear()
            L = assemble_L(ctx, i, self.axis_ops)
            lhs = (self.eye - 0.5 * dt * L).tocsc()
            self._cache[key] = (splu(lhs), L)
        return self._cache[key]

    def step(self, t, u, dt):
        tm = t + 0.5 * dt
        ctx = self.system.context(tm)
        now = self._explicit(t, u)
        if self._previous is None or self._previous[0] != dt:
            extrap = now
        else:
            extrap = 1.5 * now - 0.5 * self._previous[1]
        self._previous = (dt, now)
        src = extrap + self._prescribed(tm)
        out = np.empty_like(u)
        for i in range(ctx.m):
            lu, L = self._factors(ctx, i, dt)
            ui = u[i].ravel()
            rhs = ui + 0.5 * dt * (L @ ui) + dt * src[i].ravel()
            out[i] = lu.solve(rhs).reshape(self.system.grid.shape)
        return out


def step(state, dt, ctx, model, stepper="rk4", flux_convention="d-scaled", forcing=None):
    """Advance every component by ``dt`` from ``state.t``.

    The IMEX variant taken alone has no history, so its explicit part is a
    forward-Euler step; :func:`run` keeps the Adams-Bashforth history.
    """
    if dt == 0:
        return StateField(state.t, state.u.copy(), state.law)
    system = SemiDiscrete(ctx.law, ctx.grid, model, flux_convention, forcing)
    if stepper == "rk4":
        new = _rk4(system, state.t, state.u, dt)
    elif stepper == "imex-cn":
        new = _ImexCN(system).step(state.t, state.u, dt)
    else:
        raise ValidationError(f"stepper must be one of {STEPPERS}")
    _check_finite(new, state.t + dt, ctx.grid)
    return StateField(state.t + dt, new, state.law)


def _check_finite(u, t, grid):
    if not np.all(np.isfinite(u)):
        idx = np.argwhere(~np.isfinite(u))[0]
        coords = [float(grid.coords[k][idx[k + 1]]) for k in range(grid.n)]
        raise IntegrationError(
            f"non-finite state at t={t:.6g}, component {idx[0]}, x={coords}",
            t=t, location=(int(idx[0]), coords),
        )


# -- diagnostics --------------------------------------------------------------


class _Monitor:
    def __init__(self, cfg, u0):
        self.cfg = cfg
        self.grid = cfg.grid
        self.law = cfg.law
        m = cfg.model.m
        meta = getattr(cfg.model, "meta", None)
        if cfg.weights is not None:
            self.b = np.asarray(cfg.weights, dtype=float)
        elif meta is not None and meta.b is not None:
            self.b = np.asarray(meta.b, dtype=float)
        else:
            self.b = np.ones(m)
        d = cfg.model.d
        K = meta.K if meta is not None and meta.K is not None else 1.0
        if cfg.theta is not None:
            self.theta = float(cfg.theta)
        elif m >= 2:
            self.theta = 1.05 * diag.theta_threshold(d[0], d[1], K)
        else:
            self.theta = 1.0
        self.mass0 = None

    def record(self, t, u):
        grid = self.grid
        l1 = np.array([integrate_bulk(np.abs(ui), grid) for ui in u])
        l1g = np.array([integrate_boundary(np.abs(ui), grid) for ui in u])
        mass = evolving_mass(np.abs(u) if False else u, grid, self.law, t, self.b)
        if self.mass0 is None:
            self.mass0 = mass
        resid = (mass - self.mass0) / abs(self.mass0) if self.mass0 else mass - self.mass0
        m = u.shape[0]
        if m == 1:
            P = integrate_bulk(np.maximum(u[0], 0.0) ** self.cfg.lyapunov_p, grid)
        else:
            P = diag.lyapunov_P_field(
                np.maximum(u, 0.0), grid, self.cfg.lyapunov_p, [self.theta] * (m - 1)
            )
        return DiagnosticsRecord(
            t=float(t), L1_omega=l1, L1_gamma=l1g, sup=float(np.max(np.abs(u))),
            min=float(np.min(u)), evolving_mass=float(mass), lyapunov_P=float(P),
            conservation_residual=float(resid),
        )


def run_deviations(cfg):
    """Departures from the analysis hypotheses that are active in ``cfg``."""
    devs = ["box-domain: reference domain is an axis-aligned box, not a C^{2+mu} domain"]
    bounds = verify_bounds(cfg.law, samples=50, t1=cfg.t_end)
    if bounds.k1_relaxed:
        devs.append(f"k1-relaxation: min a(t) = {bounds.k1:g} <= 0 admitted")
    if cfg.law.jacobian != "paper-sqrt":
        devs.append(f"jacobian: {cfg.law.jacobian}")
    if cfg.flux_convention != "d-scaled":
        devs.append(f"flux_convention: {cfg.flux_convention}")
    return devs


def run(cfg):
    """Integrate ``cfg`` to ``t_end`` or until blow-up / positivity failure."""
    cfg.validate()
    start = time.perf_counter()
    grid, law, model = cfg.grid, cfg.law, cfg.model
    u = cfg.initial_state()
    if cfg.check_model:
        if not check_quasi_positivity(model, samples=1000).passed:
            warnings.warn(f"model {model.name} failed the quasi-positivity sampling check")
        mismatch, ok = check_compatibility(model, u, grid, law)
        if not ok:
            log.info("initial data violate the flux compatibility condition by %.3g", mismatch)
    system = SemiDiscrete(law, grid, model, cfg.flux_convention, cfg.forcing)
    sup0 = float(np.max(np.abs(u)))
    # the positivity monitor only applies to nonnegative initial data
    watch_sign = float(np.min(u)) >= -cfg.overshoot_tol * (1.0 + sup0)
    if not watch_sign:
        log.info("initial data take negative values; positivity monitor disabled")
    threshold = cfg.blowup_threshold or 1e6 * (1.0 + sup0)
    if threshold <= sup0:
        raise ValidationError("blowup_threshold must exceed the initial sup norm")
    auto = isinstance(cfg.dt, str)
    base_dt = stable_dt(law, grid, model.d, 0.0, cfg.t_end, cfg.safety) if auto else float(cfg.dt)
    diffusion_rate = cfg.safety / base_dt if auto else None
    imex = _ImexCN(system) if cfg.stepper == "imex-cn" else None

    monitor = _Monitor(cfg, u)
    t = 0.0
    snapshots = [StateField(0.0, u.copy(), law)]
    records = [monitor.record(0.0, u)]
    termination, message = "completed", ""
    steps = 0
    while t < cfg.t_end * (1 - 1e-14) and steps < cfg.max_steps:
        dt = base_dt
        if auto:
            rho = _reaction_stiffness(system.context(t), model, u, cfg.flux_convention)
            if cfg.stepper == "rk4" and rho > 0:
                dt = cfg.safety / (diffusion_rate + 0.5 * rho)
            elif rho > 0:
                dt = min(dt, cfg.safety / rho)
        dt = min(dt, cfg.t_end - t)
        try:
            new = imex.step(t, u, dt) if imex else _rk4(system, t, u, dt)
            _check_finite(new, t + dt, grid)
        except IntegrationError as exc:
            termination, message = "error", str(exc)
            break
        steps += 1
        t = cfg.t_end if cfg.t_end - (t + dt) < 1e-14 * cfg.t_end else t + dt
        u = new
        sup = float(np.max(np.abs(u)))
        low = float(np.min(u))
        stop = None
        if sup >= threshold:
            stop = ("blowup-detected", f"sup norm {sup:.3g} >= {threshold:.3g}; T_max <= ~{t:.6g}")
        elif watch_sign and low < -cfg.overshoot_tol * (1.0 + sup):
            stop = ("error", f"positivity failure: min {low:.3g} at t={t:.6g}")
        final = stop is not None or t >= cfg.t_end
        if final or (cfg.diagnostics_every and steps % cfg.diagnostics_every == 0):
            records.append(monitor.record(t, u))
        if final or (cfg.snapshot_every and steps % cfg.snapshot_every == 0):
            snapshots.append(StateField(t, u.copy(), law))
        if stop is not None:
            termination, message = stop
            break
    else:
        if steps >= cfg.max_steps and t < cfg.t_end:
            termination, message = "error", f"max_steps={cfg.max_steps} reached at t={t:.6g}"
    traj = Trajectory(
        snapshots, records, termination, message, steps, grid, law, model,
        tuple(monitor.b), time.perf_counter() - start, run_deviations(cfg),
    )
    log.info("run finished: %s after %d steps (%s)", termination, steps, message)
    return traj


# -- manufactured solutions ---------------------------------------------------


@dataclass
class ConvergenceResult:
    case: str
    nodes: list
    errors: list
    orders: list
    status: str  # "ok" | "exact" | "degraded"

    @property
    def observed_order(self):
        return self.orders[-1] if self.orders else math.nan


def manufactured_problem(exact, law_exprs, horizon, d=1.0, jacobian="paper-sqrt"):
    """Law, forcing builder and exact-solution callable for a sympy ``exact``.

    ``exact`` is an expression string in ``x1..xn`` and ``t``; the growth law is
    per-axis analytic with expressions ``law_exprs``.
    """
    import sympy as sp

    from . import expressions

    n = len(law_exprs)
    names = [f"x{k + 1}" for k in range(n)] + ["t"]
    syms = [sp.Symbol(s, real=True) for s in names]
    xs, t = syms[:-1], syms[-1]
    lam = [expressions.parse(e, ["t"]).subs(sp.Symbol("t", real=True), t) for e in law_exprs]
    power = sp.Rational(1, 2) if jacobian == "paper-sqrt" else 1
    a = power * sum(sp.diff(l, t) / l for l in lam)
    ue = expressions.parse(exact, names)
    bulk = sp.diff(ue, t) - d * sum(sp.diff(ue, x, 2) / l**2 for x, l in zip(xs, lam)) + a * ue
    grads = [sp.diff(ue, x) / l for x, l in zip(xs, lam)]
    law = GrowthLaw.per_axis(law_exprs, horizon, jacobian=jacobian)
    u_fn = expressions.compile_expr(ue, names)
    bulk_fn = expressions.compile_expr(bulk, names)
    grad_fns = [expressions.compile_expr(gk, names) for gk in grads]

    def build(grid):
        mesh = grid.mesh()

        def bulk_src(tt):
            return bulk_fn(*mesh, tt)[None]

        def flux_src(tt):
            out = []
            for face in grid.faces:
                idx = face.index(grid.n)
                pts = [mm[idx] for mm in mesh]
                out.append((face.side * grad_fns[face.axis](*pts, tt))[None])
            return out

        return Forcing(bulk_src, flux_src)

    def exact_fn(grid, tt):
        return u_fn(*grid.mesh(), tt)

    return law, build, exact_fn


CASES = {
    "smooth": dict(
        exact="exp(-t)*(1 + 0.5*cos(1.3*x1 + 0.4)*cos(0.9*x2 - 0.2))",
        law=("1 + 0.5*t", "exp(0.3*t)"), t_end=0.1, stepper="rk4", dt="auto",
    ),
    "linear": dict(
        exact="(1 + t)*(1 + x1 + 0.5*x2)",
        law=("1 + 0.5*t", "exp(0.3*t)"), t_end=0.1, stepper="rk4", dt="auto",
    ),
    "fixed-dt": dict(
        exact="exp(-t)*(1 + 0.5*cos(1.3*x1 + 0.4)*cos(0.9*x2 - 0.2))",
        law=("1 + 0.5*t", "exp(0.3*t)"), t_end=0.1, stepper="imex-cn", dt=0.05,
    ),
}


def manufactured_convergence(case="smooth", levels=(17, 33, 65), d=1.0,
                             order_band=(1.9, 2.1), exact_tol=1e-11):
    """Run a manufactured solution on three grids and report ``log2`` error ratios.

    Errors are discrete L2 norms (trapezoid weights) at ``t_end``.
    """
    try:
        case_def = CASES[case]
    except KeyError:
        raise ValidationError(f"unknown convergence case {case!r}; choose from {sorted(CASES)}") from None
    law, build, exact_fn = manufactured_problem(case_def["exact"], case_def["law"], case_def["t_end"], d)
    model = zero_model(1, (d,))
    errors = []
    for num in levels:
        grid = Grid.unit(len(case_def["law"]), num)
        cfg = RunConfig(
            law=law, model=model, grid=grid, t_end=case_def["t_end"],
            u0=exact_fn(grid, 0.0)[None], stepper=case_def["stepper"], dt=case_def["dt"],
            forcing=build(grid), diagnostics_every=0, check_model=False,
        )
        traj = run(cfg)
        if traj.termination != "completed":
            raise IntegrationError(f"manufactured run failed: {traj.message}")
        err = traj.final.u[0] - exact_fn(grid, case_def["t_end"])
        errors.append(math.sqrt(integrate_bulk(err**2, grid)))
    if max(errors) < exact_tol:
        return ConvergenceResult(case, list(levels), errors, [], "exact")
    orders = [math.log2(e0 / e1) for e0, e1 in zip(errors, errors[1:])]
    lo, hi = order_band
    status = "ok" if all(lo <= q <= hi for q in orders) else "degraded"
    return ConvergenceResult(case, list(levels), errors, orders, status)
