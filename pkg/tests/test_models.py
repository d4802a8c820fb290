import numpy as np
import pytest

from evodiff.errors import ModelEvaluationError, ValidationError
from evodiff.grid import Grid
from evodiff.models import (
    NegativeInputWarning,
    brusselator_surface,
    builtin,
    check_intermediate_sums,
    check_polynomial_bound,
    check_quasi_positivity,
    check_VL,
    eval_f,
    eval_g,
    example3,
    from_expressions,
    reversible_reaction,
    sample_box,
    zero_model,
)


def test_bulk_rates_vanish():
    z = np.array([[1.3], [0.2], [4.0]])
    assert np.all(eval_f(brusselator_surface(), z[:2]) == 0)
    assert np.all(eval_f(reversible_reaction(), z) == 0)
    assert np.all(eval_f(example3(), z[:2]) == 0)


def test_boundary_rates_examples():
    one2, one3 = np.ones(2), np.ones(3)
    assert np.allclose(eval_g(brusselator_surface(1, 2), one2), [0, 1])
    assert np.allclose(eval_g(reversible_reaction(1, 1), one3), [0, 0, 0])
    assert np.allclose(eval_g(example3(1, 1), one2), [0, 0])


def test_expression_model_matches_builtin():
    expr = from_expressions(["0", "0"], ["alpha*u2 - u2^2*u1", "beta - (alpha+1)*u2 + u2^2*u1"],
                            [1, 1], {"alpha": 1.0, "beta": 2.0})
    z = sample_box(2, 5.0, 200)
    assert np.allclose(expr.g(z), brusselator_surface(1, 2).g(z), rtol=1e-14)


def test_negative_input_warns_and_nonfinite_raises():
    with pytest.warns(NegativeInputWarning):
        eval_g(brusselator_surface(), np.array([-1e-10, 1.0]))
    bad = from_expressions(["0"], ["1/u1"], [1.0])
    with np.errstate(divide="ignore"), pytest.raises(ModelEvaluationError):
        eval_g(bad, np.array([0.0]))


@pytest.mark.parametrize("name", ["brusselator-surface", "reversible-reaction", "example3"])
def test_builtins_quasi_positive(name):
    assert check_quasi_positivity(builtin(name), R=10.0, samples=10_000).passed


def test_quasi_positivity_failure_has_witness():
    model = from_expressions(["0", "0"], ["-1", "0"], [1, 1])
    rep = check_quasi_positivity(model)
    assert rep.verdict == "fail"
    assert model.g(rep.witness[:, None])[0, 0] < 0
    assert rep.witness[0] == 0.0


def test_intermediate_sums():
    rep = check_intermediate_sums(reversible_reaction(), (0.5, 0.5, 1.0))
    assert rep.passed and rep.constants["L1"] == 0.0
    rep = check_intermediate_sums(brusselator_surface(1, 2), (1, 1))
    assert rep.passed and rep.constants["L1"] == pytest.approx(2.0, abs=1e-12)
    assert check_intermediate_sums(zero_model(2)).constants["L1"] == 0.0


def test_example2_weighted_sum_exact():
    z = sample_box(3, 10.0, 10_000)
    g = reversible_reaction(1.3, 0.7).g(z)
    assert np.max(np.abs(0.5 * g[0] + 0.5 * g[1] + g[2])) <= 1e-14


def test_intermediate_sums_failure_reproducible():
    model = from_expressions(["0"], ["u1^2"], [1.0])
    rep = check_intermediate_sums(model)
    assert rep.verdict == "fail"
    z = rep.witness[:, None]
    assert model.g(z)[0, 0] / (z.sum() + 1) > rep.constants["L1"]


def test_VL_brusselator():
    rep = check_VL(brusselator_surface(1, 2), 1.0, [(2.0, 1.0), (1.0, 1.0), (5.0, 1.0)])
    assert rep.passed
    for a, L in rep.constants["L_a"].items():
        assert L <= max(2.0, 1.0 * a[0]) + 1e-9


def test_VL_example3_quarter_bound():
    rep = check_VL(example3(1, 1), 1.0, [(1.0, 1.0)])
    assert rep.passed
    assert rep.constants["L_a"][(1.0, 1.0)] <= 0.25 + 1e-9


def test_VL_example3_certificate_bound():
    model = example3(1, 1)
    for a in (1.0, 3.0, 6.0):
        rep = check_VL(model, 1.0, [(a, 1.0)])
        assert rep.passed
        assert rep.constants["L_a"][(a, 1.0)] <= model.meta.L_a((a, 1.0)) + 1e-9
    # pointwise: a g1 + g2 <= u1 (a alpha)^2 / (4 beta) on a dense grid
    u1, u2 = np.meshgrid(np.linspace(0, 5, 201), np.linspace(0, 3, 301))
    z = np.stack([u1.ravel(), u2.ravel()])
    g = model.g(z)
    assert np.all(3.0 * g[0] + g[1] <= z[0] * 9 / 4 + 1e-12)


def test_VL_zero_and_validation():
    rep = check_VL(zero_model(2), 1.0, [(1.0, 1.0), (3.0, 1.0)])
    assert all(v == 0 for v in rep.constants["L_a"].values())
    with pytest.raises(ValidationError):
        check_VL(zero_model(2), 2.0, [(1.0, 1.0)])


def test_polynomial_degrees():
    assert check_polynomial_bound(brusselator_surface()).constants["l"] == 3
    assert check_polynomial_bound(example3()).constants["l"] == 7
    rep = check_polynomial_bound(zero_model(2))
    assert rep.constants["l"] == 0 and rep.constants["K_fg"] == 0


def test_builtin_errors():
    with pytest.raises(ValidationError):
        builtin("nope")
    with pytest.raises(ValidationError):
        builtin("example3", {"gamma": 1.0})
    with pytest.raises(ValidationError):
        reversible_reaction(d=(1.0, -1.0, 1.0))


def test_compatibility_check():
    from evodiff.models import check_compatibility

    g = Grid.unit(1, 41)
    x = g.coords[0]
    model = from_expressions(["0"], ["1"], [1.0])
    # d u' = g = 1 on both faces: u' = -1 at x=0 (outward -e) and +1 at x=1
    u0 = ((x - 0.5) ** 2)[None]
    mismatch, ok = check_compatibility(model, u0, g)
    assert ok and mismatch < 1e-10
    mismatch, ok = check_compatibility(model, np.ones((1, 41)), g)
    assert not ok and mismatch == pytest.approx(1.0)
