import numpy as np
import pytest

from evodiff.errors import ValidationError
from evodiff.grid import Grid, StateField
from evodiff.growth import GrowthLaw
from evodiff.models import from_expressions, reversible_reaction, zero_model
from evodiff.operator import OperatorContext
from evodiff.solver import RunConfig, manufactured_convergence, run, stable_dt, step


def heat_cfg(num=65, stepper="rk4", dt="auto", t_end=0.05, **kw):
    return RunConfig(GrowthLaw.static(1, 1.0), zero_model(1), Grid.unit(1, num), t_end,
                     lambda x: np.cos(np.pi * x)[None], stepper=stepper, dt=dt, **kw)


def test_stable_dt_example_and_scaling():
    law = GrowthLaw.static(1, 1.0)
    assert stable_dt(law, Grid.unit(1, 11), (1.0,)) == pytest.approx(4.5e-3)
    assert stable_dt(law, Grid.unit(1, 21), (1.0,)) == pytest.approx(4.5e-3 / 4)


def test_stable_dt_is_empirically_stable():
    # explicit RK4 at the bound stays bounded, well beyond it the noise grows
    law = GrowthLaw.static(1, 1.0)
    g = Grid.unit(1, 41)
    dt = stable_dt(law, g, (1.0,))
    noise = np.random.default_rng(1).normal(size=(1, 41))
    ok = run(RunConfig(law, zero_model(1), g, 200 * dt, noise, dt=dt, check_model=False))
    assert ok.final.u.max() <= np.abs(noise).max()
    bad = run(RunConfig(law, zero_model(1), g, 200 * dt, noise, dt=2.5 * dt, check_model=False))
    assert bad.termination != "completed" or np.abs(bad.final.u).max() > 1e3


def test_one_step_dilution_exact():
    # standard-det in 2-D with rho = 0.075 gives a = 0.15
    law = GrowthLaw.exponential(0.075, 2, 1.0, jacobian="standard-det")
    g = Grid.unit(2, 5)
    ctx = OperatorContext(law, g, (1.0,), 0.0)
    s = StateField(0.0, np.full((1, 5, 5), 2.0), law)
    out = step(s, 0.01, ctx, zero_model(1))
    assert np.allclose(out.u, 2.0 * np.exp(-0.0015), rtol=1e-12, atol=0)
    assert step(s, 0.0, ctx, zero_model(1)).u.tolist() == s.u.tolist()


def test_imex_converges_in_time():
    ref = run(heat_cfg(t_end=0.05)).final.u
    errs = [np.abs(run(heat_cfg(stepper="imex-cn", dt=dt, t_end=0.05)).final.u - ref).max()
            for dt in (2.5e-3, 1.25e-3)]
    assert errs[1] < errs[0] / 3


def test_cadence_and_timestamps():
    tr = run(heat_cfg(num=17, dt=1e-3, t_end=0.02, snapshot_every=5, diagnostics_every=2))
    assert tr.termination == "completed" and tr.exit_code == 0
    assert np.allclose(tr.times, [0, 0.005, 0.01, 0.015, 0.02])
    assert len(tr.records) == 11
    assert np.all(np.diff(tr.times) > 0)
    assert tr.final.t == 0.02


def test_zero_model_constant_state_stays():
    g = Grid.unit(2, 9)
    tr = run(RunConfig(GrowthLaw.static(2, 1.0), zero_model(2), g, 0.1, np.array([1.0, 2.0])))
    assert np.array_equal(tr.final.u, tr.snapshots[0].u)


def test_blowup_detection():
    model = from_expressions(["0"], ["u1^2"], [1.0])
    tr = run(RunConfig(GrowthLaw.static(1, 5.0), model, Grid.unit(1, 41), 5.0, np.ones(1),
                       check_model=False))
    assert tr.termination == "blowup-detected" and tr.exit_code == 2
    assert tr.records[-1].sup >= 1e6 * 2
    assert tr.steps < 10**6


def test_conservation_static():
    g = Grid.unit(2, 17)
    X, Y = g.mesh()
    u0 = np.stack([1 + 0.5 * np.cos(np.pi * X), 1.5 + 0.3 * np.cos(np.pi * Y), 0.5 + 0 * X])
    tr = run(RunConfig(GrowthLaw.static(2, 1.0), reversible_reaction(d=(1.0, 0.5, 2.0)), g, 0.2, u0))
    assert max(abs(r.conservation_residual) for r in tr.records) < 1e-12


def test_validation():
    with pytest.raises(ValidationError):
        run(heat_cfg(t_end=2.0))
    with pytest.raises(ValidationError):
        run(heat_cfg(stepper="euler"))
    with pytest.raises(ValidationError):
        run(heat_cfg(blowup_threshold=0.5))


def test_deviations_listed():
    tr = run(heat_cfg(num=9, t_end=0.01))
    assert tr.deviations[0].startswith("box-domain")


def test_linear_manufactured_exact():
    res = manufactured_convergence("linear")
    assert res.status == "exact"
    assert max(res.errors) < 1e-11
