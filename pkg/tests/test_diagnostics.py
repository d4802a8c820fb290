import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evodiff import diagnostics as dg
from evodiff.errors import ValidationError
from evodiff.grid import Grid
from evodiff.growth import GrowthLaw
from evodiff.models import from_expressions, reversible_reaction
from evodiff.solver import RunConfig, run


def brute_P_m(z, p, thetas):
    # independent enumeration over all multi-indices with |beta| <= p
    m = len(z)
    total = 0.0
    for beta in itertools.product(range(p + 1), repeat=m - 1):
        s = sum(beta)
        if s > p:
            continue
        coef = math.factorial(p) / (math.prod(math.factorial(b) for b in beta) * math.factorial(p - s))
        mono = z[-1] ** (p - s) * math.prod(zi**b for zi, b in zip(z, beta))
        total += coef * math.prod(th ** (b * b) for th, b in zip(thetas, beta)) * mono
    return total


def test_P_examples():
    assert dg.lyapunov_P(1.0, 1.0, 2, 2.0) == 21.0
    assert dg.lyapunov_P_m([1.0, 1.0, 1.0], 2, [2.0, 2.0]) == 49.0
    assert dg.lyapunov_P(0.0, 1.7, 4, 3.0) == pytest.approx(1.7**4)
    with pytest.raises(ValidationError):
        dg.lyapunov_P(1.0, 1.0, 1, 2.0)


@settings(max_examples=60, deadline=None)
@given(u=st.floats(0, 10), v=st.floats(0, 10), p=st.integers(2, 6))
def test_theta_one_binomial(u, v, p):
    assert dg.lyapunov_P(u, v, p, 1.0) == pytest.approx((u + v) ** p, rel=1e-12, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(u=st.floats(0, 10), v=st.floats(0, 10), p=st.integers(2, 6), th=st.floats(0.5, 3))
def test_m2_bitwise(u, v, p, th):
    assert dg.lyapunov_P_m([u, v], p, [th]) == dg.lyapunov_P(u, v, p, th)


def test_P_m_against_enumeration(rng):
    for m, p in ((3, 2), (3, 4), (4, 3)):
        z = rng.uniform(0, 3, m)
        th = rng.uniform(1, 2, m - 1)
        assert dg.lyapunov_P_m(z, p, th) == pytest.approx(brute_P_m(z, p, th), rel=1e-12)
    z = rng.uniform(0, 3, 4)
    assert dg.lyapunov_P_m(z, 3, [1.0] * 3) == pytest.approx(z.sum() ** 3, rel=1e-12)


def test_dP_matches_finite_differences():
    u = lambda t: 1 + 0.5 * np.sin(t)
    v = lambda t: 2 + t**2
    ut = lambda t: 0.5 * np.cos(t)
    vt = lambda t: 2 * t
    t0, p, th = 0.7, 3, 1.6
    errs = []
    for dt in (1e-2, 5e-3):
        fd = (dg.lyapunov_P(u(t0 + dt), v(t0 + dt), p, th) - dg.lyapunov_P(u(t0 - dt), v(t0 - dt), p, th)) / (2 * dt)
        errs.append(abs(fd - dg.lyapunov_dP(u(t0), v(t0), ut(t0), vt(t0), p, th)))
    assert errs[1] < errs[0] / 3.5


def test_threshold_and_B():
    assert dg.theta_threshold(4, 1, 1) == 1.25
    assert dg.theta_threshold(2, 2, 0.5) == 1.0
    assert dg.theta_threshold(1, 1, 7) == 7
    with pytest.raises(ValidationError):
        dg.theta_threshold(0, 1)
    b = dg.b_matrix_posdef(2, 1, 1, 0)
    assert b.matrix.tolist() == [[16, 2], [2, 1]] and b.det == 12 and b.is_positive_definite
    b = dg.b_matrix_posdef(1, 1, 1, 0)
    assert b.det == 0 and not b.is_positive_definite
    for beta in range(4):
        th = 1.3
        assert dg.b_matrix_posdef(th, 2, 2, beta).det == pytest.approx(4 * (th ** (4 * beta + 4) - th ** (4 * beta + 2)))


def test_B_monotone_in_theta():
    for D, Dt, beta in ((1, 1, 0), (4, 1, 1), (0.3, 2.0, 2)):
        grid = np.linspace(1.0, 6.0, 200)
        flags = [dg.b_matrix_posdef(th, D, Dt, beta).is_positive_definite for th in grid]
        first = flags.index(True)
        assert all(flags[first:])


def test_dual_zero_source():
    g = Grid.unit(2, 9)
    times = np.linspace(0, 0.1, 11)
    cfg = dg.DualConfig(lambda t, x, y: 0 * x, 0.0, 0.0, 0.1, 1.0)
    assert np.all(dg.dual_solve(cfg, GrowthLaw.static(2, 1.0), g, times).phi == 0)


def test_dual_constant_source_linear_in_time():
    g = Grid.unit(2, 9)
    times = np.linspace(0, 0.2, 21)
    cfg = dg.DualConfig(lambda t, x, y: 1 + 0 * x, 0.0, 0.0, 0.2, 1.0, normalize=False)
    dual = dg.dual_solve(cfg, GrowthLaw.static(2, 1.0), g, times)
    for k, t in enumerate(times):
        assert np.allclose(dual.phi[k], 0.2 - t, atol=1e-13)


def test_dual_positive_and_validation():
    g = Grid.unit(2, 11)
    times = np.linspace(0, 0.1, 11)
    xi = lambda t, x, y: np.exp(-20 * ((x - 0.3) ** 2 + (y - 0.8) ** 2)) * (1 + t)
    law = GrowthLaw.exponential(0.2, 2, 1.0)
    dual = dg.dual_solve(dg.DualConfig(xi, 1.0, 2.0, 0.1, 0.5, D_tilde=1.0), law, g, times)
    assert dual.min >= -1e-8 * (1 + dual.max)
    assert dg.spacetime_norm(dual.xi, times, g, 2.0) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        dg.DualConfig(xi, 1.0, 1.0, 0.1, 0.5, D_tilde=1.0).validate()


def test_duality_zero_primal_passes():
    g = Grid.unit(2, 9)
    times = np.linspace(0, 0.1, 11)
    law = GrowthLaw.static(2, 1.0)
    cfg = dg.DualConfig(lambda t, x, y: 1 + x, 0.0, 0.0, 0.1, 1.0)
    dual = dg.dual_solve(cfg, law, g, times)
    u = np.zeros((len(times), 2) + g.shape)
    res = dg.duality_check(times, u, dual, law, g, (1.0, 1.0), cfg)
    assert res.lhs == 0 and res.passed()


def test_duality_example2_small():
    law = GrowthLaw.static(2, 1.0)
    g = Grid.unit(2, 17)

    def u0(x, y):
        return np.stack([1 + 0.5 * np.cos(np.pi * x), 1 + 0.5 * np.cos(np.pi * y), 0.5 + 0 * x])

    exp = dg.duality_experiment(reversible_reaction(d=(1.0, 0.5, 2.0)), law, g, 0.1, u0)
    assert exp.result.passed(1e-2)
    assert abs(exp.result.residual) <= 1e-3 * abs(exp.result.rhs)


def test_l1_report_conserved_and_decay():
    g = Grid.unit(2, 13)
    X, Y = g.mesh()
    u0 = np.stack([1 + 0.5 * np.cos(np.pi * X), 1.5 + 0 * X, 0.5 + 0 * X])
    tr = run(RunConfig(GrowthLaw.static(2, 1.0), reversible_reaction(), g, 0.2, u0))
    rep = dg.l1_report(tr)
    assert abs(rep.rate) < 1e-10 and rep.bounded
    law = GrowthLaw.exponential(0.1, 2, 2.0)
    from evodiff.models import zero_model

    tr = run(RunConfig(law, zero_model(1), g, 1.0, np.ones(1), dt=0.05))
    # isotropic exponential, sqrt Jacobian in 2-D: a = 0.1
    assert dg.l1_report(tr).rate == pytest.approx(-0.1, rel=1e-8)


def test_l1_report_blowup_flag():
    model = from_expressions(["0"], ["u1^2"], [1.0])
    tr = run(RunConfig(GrowthLaw.static(1, 5.0), model, Grid.unit(1, 41), 5.0, np.ones(1),
                       check_model=False))
    assert dg.l1_report(tr).super_exponential


def test_interpolation_fit():
    g = Grid.unit(2, 21)
    X, Y = g.mesh()
    fields = [np.cos(k * np.pi * X) * np.cos(j * np.pi * Y) + 1.5 for k in range(3) for j in range(3)]
    fields.append(np.exp(3 * X * Y))
    for eps in (0.5, 0.1, 0.02):
        fit = dg.fit_interpolation_constant(fields, g, eps)
        assert fit.satisfied and math.isfinite(fit.C_boundary)
        for v in fields:
            from evodiff.grid import integrate_boundary, integrate_bulk

            lhs = integrate_boundary(v * v, g)
            rhs = eps * dg._grad_sq(v, g) + fit.C_boundary * integrate_bulk(np.abs(v), g) ** 2
            assert lhs <= rhs * (1 + 1e-12)
    # smaller eps needs a larger constant
    assert dg.fit_interpolation_constant(fields, g, 0.02).C_boundary >= dg.fit_interpolation_constant(fields, g, 0.5).C_boundary
