"""Estimate machinery turned into computable monitors.

Lyapunov polynomials for two and ``m`` components, the ``B`` matrix and the
``Theta`` threshold, the backward dual problem, the duality inequality and
an exponential-growth report for weighted L1 norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .grid import integrate_boundary, integrate_bulk
from .operator import OperatorContext, close_with_flux, laplacian_t

# -- Lyapunov polynomials -----------------------------------------------------


def _check_p(p):
    if int(p) != p or p < 2:
        raise ValidationError(f"p must be an integer >= 2, got {p}")
    return int(p)


@dataclass(frozen=True)
class LyapunovParams:
    p: int
    theta: tuple

    def __post_init__(self):
        _check_p(self.p)
        th = (self.theta,) if np.isscalar(self.theta) else tuple(self.theta)
        if any(not x > 0 for x in th):
            raise ValidationError("theta entries must be positive")
        object.__setattr__(self, "theta", tuple(float(x) for x in th))


def lyapunov_P(u, v, p, theta):
    """``sum_beta C(p, beta) Theta^(beta^2) u^beta v^(p - beta)``.

    Works pointwise on scalars or arrays; ``u, v >= 0`` is assumed.
    """
    p = _check_p(p)
    theta = float(theta)
    total = 0.0
    for b in range(p + 1):
        term = float(math.comb(p, b))
        term = term * theta ** (b * b)
        term = term * u**b
        term = term * v ** (p - b)
        total = total + term
    return total


def _multi_indices(k, p):
    """Multi-indices of length ``k`` with ``|beta| <= p``; for k=1 this is 0..p."""
    if k == 1:
        return [(b,) for b in range(p + 1)]
    out = []
    for first in range(p + 1):
        for rest in _multi_indices(k - 1, p - first):
            out.append((first,) + rest)
    return out


def lyapunov_P_m(z, p, thetas):
    """Multinomial generalisation over ``z = (z_1, ..., z_m)``.

    Each term is ``p! / (beta! (p - |beta|)!) prod theta_j^(beta_j^2)
    prod z_j^beta_j * z_m^(p - |beta|)`` over ``beta`` of length ``m - 1``.
    """
    p = _check_p(p)
    thetas = [float(t) for t in np.atleast_1d(thetas)]
    if any(not t > 0 for t in thetas):
        raise ValidationError("theta entries must be positive")
    m = len(z)
    if len(thetas) != m - 1:
        raise ValidationError(f"need {m - 1} theta values for m={m}")
    last = z[-1]
    total = 0.0
    for beta in _multi_indices(m - 1, p):
        s = sum(beta)
        coeff = math.factorial(p) // (math.prod(math.factorial(b) for b in beta) * math.factorial(p - s))
        term = float(coeff)
        for t, b in zip(thetas, beta):
            term = term * t ** (b * b)
        for zj, b in zip(z[:-1], beta):
            term = term * zj**b
        term = term * last ** (p - s)
        total = total + term
    return total


def lyapunov_dP(u, v, u_t, v_t, p, theta):
    """Chain-rule time derivative of :func:`lyapunov_P` along ``(u(t), v(t))``."""
    p = _check_p(p)
    theta = float(theta)
    total = 0.0
    for b in range(p):
        coeff = math.factorial(p) // (math.factorial(b) * math.factorial(p - 1 - b))
        total = total + coeff * theta ** (b * b) * u**b * v ** (p - 1 - b) * (
            theta ** (2 * b + 1) * u_t + v_t
        )
    return total


def lyapunov_P_field(u, grid, p, thetas):
    """``int_Omega P(u(x)) dx`` for a stack ``u`` of shape ``(m, *grid.shape)``."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] == 2:
        vals = lyapunov_P(u[0], u[1], p, np.atleast_1d(thetas)[0])
    else:
        vals = lyapunov_P_m(list(u), p, thetas)
    return integrate_bulk(vals, grid)


def theta_threshold(D, D_tilde, K=1.0):
    """``max{K, (D + D~) / (2 sqrt(D D~))}``."""
    if not (D > 0 and D_tilde > 0):
        raise ValidationError("diffusivities must be positive")
    return max(K, (D + D_tilde) / (2.0 * math.sqrt(D * D_tilde)))


@dataclass(frozen=True)
class BMatrix:
    matrix: np.ndarray
    det: float
    is_positive_definite: bool


def b_matrix_posdef(theta, D, D_tilde, beta=0):
    """The 2x2 form ``[[D T^(4b+4), c T^(2b+1)], [c T^(2b+1), D~]]``, ``c = (D+D~)/2``.

    Positive definiteness is decided by the leading principal minors.
    """
    if int(beta) != beta or beta < 0:
        raise ValidationError("beta must be a nonnegative integer")
    beta = int(beta)
    off = 0.5 * (D + D_tilde) * theta ** (2 * beta + 1)
    a11 = D * theta ** (4 * beta + 4)
    mat = np.array([[a11, off], [off, D_tilde]], dtype=float)
    det = a11 * D_tilde - off * off
    return BMatrix(mat, float(det), bool(a11 > 0 and det > 0))


# -- dual problem -------------------------------------------------------------


@dataclass
class DualConfig:
    """Data of the backward problem ``phi_t + D Delta_t phi = -L1 phi - xi``.

    ``xi`` is ``xi(t, *mesh) -> array`` or an array on the time grid of shape
    ``(len(times), *grid.shape)``. When ``normalize`` is set it is rescaled so
    that its discrete ``p'``-norm over the space-time cylinder is 1.
    """

    xi: object
    L1: float
    L2: float
    T: float
    D: float
    D_tilde: float | None = None
    p: float = 2.0
    normalize: bool = True

    def validate(self):
        if not self.D > 0:
            raise ValidationError("D must be positive")
        if self.L1 < 0:
            raise ValidationError("L1 must be nonnegative")
        Dt = self.D if self.D_tilde is None else self.D_tilde
        need = max(Dt * self.L1 / self.D, self.L1)
        if self.L2 < need - 1e-14:
            raise ValidationError(f"L2={self.L2} must be >= max(D~ L1 / D, L1) = {need}")
        if not self.T > 0:
            raise ValidationError("T must be positive")

    @property
    def p_conjugate(self):
        return self.p / (self.p - 1.0)


@dataclass
class DualTrajectory:
    times: np.ndarray
    phi: np.ndarray  # (K, *grid.shape), phi[k] at times[k]
    xi: np.ndarray  # the (normalised) source on the same grid
    scale: float = 1.0

    @property
    def min(self):
        return float(self.phi.min())

    @property
    def max(self):
        return float(self.phi.max())


def _time_trapezoid(times):
    times = np.asarray(times, dtype=float)
    w = np.zeros_like(times)
    dt = np.diff(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def _sample_xi(xi, times, grid):
    if callable(xi):
        mesh = grid.mesh()
        return np.stack([np.broadcast_to(xi(t, *mesh), grid.shape) for t in times]).astype(float)
    arr = np.asarray(xi, dtype=float)
    if arr.shape != (len(times),) + grid.shape:
        raise ValidationError(f"xi array must have shape {(len(times),) + grid.shape}")
    return arr.copy()


def spacetime_norm(values, times, grid, q):
    wt = _time_trapezoid(times)
    inner = np.array([integrate_bulk(np.abs(v) ** q, grid) for v in values])
    return float(np.dot(wt, inner)) ** (1.0 / q)


def dual_solve(cfg, law, grid, times):
    """Solve the dual problem on ``times`` (increasing, from 0 to ``cfg.T``).

    With ``tau = T - t`` the problem becomes the forward equation
    ``psi_tau = D Delta_{T-tau} psi + L1 psi + xi`` with ``psi(0) = 0`` and the
    Robin closure ``D grad_t psi . eta = L2 psi``; it is integrated by RK4,
    with substeps where the time grid is coarser than the explicit bound.
    """
    cfg.validate()
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or abs(times[-1] - cfg.T) > 1e-12 * max(1.0, cfg.T):
        raise ValidationError("dual time grid must increase and end at T")
    xi_vals = _sample_xi(cfg.xi, times, grid)
    if np.any(xi_vals < 0):
        raise ValidationError("xi must be nonnegative")
    scale = 1.0
    if cfg.normalize:
        norm = spacetime_norm(xi_vals, times, grid, cfg.p_conjugate)
        if norm > 0:
            scale = 1.0 / norm
    xi_vals = xi_vals * scale
    T = float(times[-1])

    def xi_at(t):
        if callable(cfg.xi):
            return scale * np.broadcast_to(cfg.xi(t, *grid.mesh()), grid.shape)
        k = int(np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2))
        w = (t - times[k]) / (times[k + 1] - times[k])
        return (1 - w) * xi_vals[k] + w * xi_vals[k + 1]

    def rhs(tau, psi):
        t = min(max(T - tau, 0.0), T)
        ctx = OperatorContext(law, grid, (cfg.D,), t)
        ghosts = close_with_flux(ctx, psi, [cfg.L2 / cfg.D * tr for tr in _traces(psi, grid)])
        return cfg.D * laplacian_t(ctx, psi, ghosts) + cfg.L1 * psi + xi_at(t)[None]

    bound = _dual_dt(law, grid, cfg)
    psi = np.zeros((1,) + grid.shape)
    out = [psi[0].copy()]
    taus = T - times[::-1]
    for k in range(len(taus) - 1):
        tau0, tau1 = taus[k], taus[k + 1]
        nsub = max(1, math.ceil((tau1 - tau0) / bound))
        h = (tau1 - tau0) / nsub
        for j in range(nsub):
            tau = tau0 + j * h
            k1 = rhs(tau, psi)
            k2 = rhs(tau + 0.5 * h, psi + 0.5 * h * k1)
            k3 = rhs(tau + 0.5 * h, psi + 0.5 * h * k2)
            k4 = rhs(tau + h, psi + h * k3)
            psi = psi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(psi[0].copy())
    phi = np.stack(out[::-1])
    return DualTrajectory(times, phi, xi_vals, scale)


def _traces(psi, grid):
    return [psi[(slice(None),) + f.index(grid.n)] for f in grid.faces]


def _dual_dt(law, grid, cfg):
    from .growth import verify_bounds

    bounds = verify_bounds(law, samples=50, t1=cfg.T)
    stiff = 2.0 * cfg.D * sum(bounds.Lambda2 / h**2 for h in grid.h)
    robin = max(2.0 * cfg.L2 * math.sqrt(bounds.Lambda2) / h for h in grid.h)
    return 0.9 / (stiff + 0.5 * robin + cfg.L1)


@dataclass
class DualityResult:
    lhs: float
    rhs: float
    terms: dict = field(default_factory=dict)

    @property
    def residual(self):
        return self.lhs - self.rhs

    def passed(self, tol_rel=1e-2, tol_abs=0.0):
        return self.residual <= tol_rel * abs(self.rhs) + tol_abs


def duality_check(times, u, dual, law, grid, d, cfg, b=None, dilution="printed"):
    """Both sides of the duality inequality for ``S = sum_i b_i u_i``.

    ``u`` has shape ``(K, m, *grid.shape)`` on ``times``, which must coincide
    with ``dual.times``. ``dilution="printed"`` uses ``-int int a S``;
    ``"weighted"`` uses ``-int int a phi S``, the term an integration by parts
    actually produces.
    """
    times = np.asarray(times, dtype=float)
    u = np.asarray(u, dtype=float)
    if len(times) != len(dual.times) or not np.allclose(times, dual.times, rtol=0, atol=1e-12):
        raise ValidationError("primal and dual trajectories are not aligned in time")
    if u.shape[0] != len(times):
        raise ValidationError("u must have one snapshot per time")
    if dilution not in ("printed", "weighted"):
        raise ValidationError("dilution must be 'printed' or 'weighted'")
    m = u.shape[1]
    b = np.ones(m) if b is None else np.asarray(b, dtype=float)
    d = np.asarray(d, dtype=float)
    wt = _time_trapezoid(times)
    S = np.tensordot(u, b, axes=([1], [0]))  # (K, *shape)
    phi, xi = dual.phi, dual.xi
    lhs = cross = l1_bulk = l1_bdry = dil = 0.0
    for k, t in enumerate(times):
        ctx = OperatorContext(law, grid, (cfg.D,), t)
        ph = phi[k][None]
        ghosts = close_with_flux(ctx, ph, [cfg.L2 / cfg.D * tr for tr in _traces(ph, grid)])
        lap = laplacian_t(ctx, ph, ghosts)[0]
        lhs += wt[k] * integrate_bulk(S[k] * xi[k], grid)
        cross += wt[k] * sum(
            b[i] * (d[i] - cfg.D) * integrate_bulk(u[k, i] * lap, grid) for i in range(m)
        )
        l1_bulk += wt[k] * cfg.L1 * integrate_bulk(phi[k], grid)
        l1_bdry += wt[k] * cfg.L1 * integrate_boundary(phi[k], grid)
        weight = S[k] * phi[k] if dilution == "weighted" else S[k]
        dil -= wt[k] * law.dilution_rate(t) * integrate_bulk(weight, grid)
    initial = integrate_bulk(S[0] * phi[0], grid)
    terms = dict(initial=initial, cross_diffusion=cross, L1_bulk=l1_bulk,
                 L1_boundary=l1_bdry, dilution=dil)
    return DualityResult(float(lhs), float(sum(terms.values())), terms)


# -- L1 report ----------------------------------------------------------------


@dataclass
class L1Report:
    max_omega: float
    max_gamma: float
    C: float
    rate: float
    super_exponential: bool
    bounded: bool


def _slope(t, y):
    if len(t) < 2 or np.ptp(t) == 0:
        return 0.0
    return float(np.polyfit(t, y, 1)[0])


def l1_report(trajectory, b=None):
    """Fit ``C exp(r t)`` to the weighted L1 norms of a trajectory's records.

    ``C`` is the smallest constant for which the fitted envelope dominates
    every record. Growth is flagged super-exponential when the log-slope
    over the second half of the run exceeds twice the first-half slope by
    more than one unit (on either the bulk or the boundary series).
    """
    recs = trajectory.records
    if not recs:
        raise ValidationError("trajectory has no diagnostics records")
    m = len(recs[0].L1_omega)
    b = np.asarray(trajectory.weights if b is None and trajectory.weights else (b or np.ones(m)), dtype=float)
    t = np.array([r.t for r in recs])
    om = np.array([float(np.dot(b, r.L1_omega)) for r in recs])
    ga = np.array([float(np.dot(b, r.L1_gamma)) for r in recs])
    tiny = 1e-300
    log_om = np.log(np.maximum(om, tiny))
    rate = _slope(t, log_om)
    C = float(np.max(om * np.exp(-rate * t)))

    def accelerating(series):
        logs = np.log(np.maximum(series, tiny))
        half = 0.5 * (t[0] + t[-1])
        first, second = t <= half, t >= half
        if first.sum() < 2 or second.sum() < 2:
            return False
        r1, r2 = _slope(t[first], logs[first]), _slope(t[second], logs[second])
        return r2 > 2.0 * max(r1, 0.0) + 1.0

    sup_exp = accelerating(om) or accelerating(ga)
    return L1Report(float(om.max()), float(ga.max()), C, rate, bool(sup_exp), not sup_exp)


# -- interpolation inequality -------------------------------------------------


def _grad_sq(v, grid):
    total = 0.0
    for k in range(grid.n):
        g = np.gradient(v, grid.h[k], axis=k, edge_order=2)
        total += integrate_bulk(g * g, grid)
    return total


@dataclass
class InterpolationFit:
    eps: float
    gamma: float
    C_boundary: float
    C_bulk: float
    satisfied: bool


def fit_interpolation_constant(fields, grid, eps, gamma=2.0):
    """Smallest ``C`` with ``||v||_2^2 <= eps ||grad v||_2^2 + C ||v^(2/gamma)||_1^gamma``.

    Fitted separately for the boundary and bulk left-hand sides over
    ``fields``; the returned constants satisfy the inequality for every field.
    """
    if not eps > 0 or gamma < 1:
        raise ValidationError("need eps > 0 and gamma >= 1")
    Cb = Cv = 0.0
    for v in fields:
        v = grid.check_field(v)
        low = integrate_bulk(np.abs(v) ** (2.0 / gamma), grid) ** gamma
        grad = _grad_sq(v, grid)
        bdry = integrate_boundary(v * v, grid)
        bulk = integrate_bulk(v * v, grid)
        if low == 0:
            if bdry > eps * grad or bulk > eps * grad:
                return InterpolationFit(eps, gamma, math.inf, math.inf, False)
            continue
        Cb = max(Cb, (bdry - eps * grad) / low)
        Cv = max(Cv, (bulk - eps * grad) / low)
    return InterpolationFit(eps, gamma, max(Cb, 0.0), max(Cv, 0.0), True)


# -- end-to-end duality experiment ---------------------------------------------


@dataclass
class DualityExperiment:
    result: DualityResult
    dual: DualTrajectory
    trajectory: object


def duality_experiment(model, law, grid, T, u0, xi=None, D=None, L1=None, L2=None,
                       dt=None, p=2.0, dilution="printed"):
    """Run the primal system and the dual problem on a shared time grid.

    ``xi`` defaults to a smooth positive bump in space and time; ``D`` to the
    first diffusivity; ``L1`` to the model's certified constant (0 if none);
    ``L2`` to the smallest admissible value. ``dt`` defaults to the explicit
    bound for the larger of ``max(d)`` and ``D``.
    """
    from .solver import RunConfig, run, stable_dt

    D = float(model.d[0] if D is None else D)
    meta = getattr(model, "meta", None)
    if L1 is None:
        L1 = float(meta.L1) if meta is not None and meta.L1 is not None else 0.0
    D_tilde = max(model.d) if len(model.d) > 1 else D
    if L2 is None:
        L2 = max(D_tilde * L1 / D, L1)
    if xi is None:
        def xi(t, *x):
            bump = 1.0
            for xk in x:
                bump = bump * (1.0 + 0.5 * np.cos(math.pi * xk))
            return bump * (1.0 + t)
    if dt is None:
        dt = stable_dt(law, grid, tuple(model.d) + (D,), 0.0, T)
    steps = max(1, math.ceil(T / dt - 1e-9))
    cfg = RunConfig(law=law, model=model, grid=grid, t_end=T, u0=u0, dt=T / steps,
                    snapshot_every=1, diagnostics_every=0, check_model=False)
    traj = run(cfg)
    if traj.termination != "completed":
        raise ValidationError(f"primal run did not complete: {traj.message}")
    dcfg = DualConfig(xi=xi, L1=L1, L2=L2, T=T, D=D, D_tilde=D_tilde, p=p)
    dual = dual_solve(dcfg, law, grid, traj.times)
    b = meta.b if meta is not None and meta.b is not None else None
    res = duality_check(traj.times, traj.stack(), dual, law, grid, model.d, dcfg, b, dilution)
    return DualityExperiment(res, dual, traj)
