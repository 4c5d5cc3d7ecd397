import numpy as np
import pytest

from affine_calabi import equiaffine as eq
from affine_calabi.calabi import CompositionSpec
from affine_calabi.factors import (
    Composite,
    FactorError,
    Flat,
    Hyperboloid,
    Point,
    factor_invariants,
    flat_closed_forms,
    make_flat_factor,
    make_hyperboloid_factor,
    make_point_factor,
)


def test_point_factor():
    p = make_point_factor(2.0)
    assert p.dim == 0 and p.L1 == -1.0
    assert p.chart().position([]) == pytest.approx([2.0])
    with pytest.raises(FactorError):
        make_point_factor(0.0)


def test_two_points_make_the_hyperbola():
    chart = Composite(CompositionSpec((Point(), Point()))).chart()
    for t in (-0.3, 0.0, 0.8):
        np.testing.assert_allclose(chart.position([t]), [np.exp(t), np.exp(-t)], rtol=1e-15)


def test_flat_closed_forms_small_cases():
    cf = flat_closed_forms(1, 1.0)
    assert cf["g"][0, 0] == pytest.approx(2 ** (2 / 3))
    assert cf["L1"] == pytest.approx(-(2 ** (-2 / 3)))
    assert np.all(cf["A"] == 0.0)
    cf = flat_closed_forms(2, 1.0)
    np.testing.assert_allclose(cf["g"], np.diag([2.0, 1.5]) * 3 ** (-0.25))
    assert cf["J"] == pytest.approx(3 ** (-0.75))


def test_flat_chart_satisfies_defining_equation(rng):
    f = make_flat_factor(2, 1.7)
    chart = f.chart()
    for u in chart.sample(rng, 10):
        assert np.prod(chart.position(u)) == pytest.approx(1.7, rel=1e-14)


@pytest.mark.parametrize("n0", [2, 3, 4])
@pytest.mark.parametrize("C0", [0.5, 1.0, 3.0])
def test_flat_engine_J_equals_minus_L1(n0, C0):
    inv = eq.invariants(Flat(n0, C0).chart(), np.linspace(-0.2, 0.3, n0))
    assert inv.J == pytest.approx(-inv.L1, rel=1e-9)


def test_flat_equals_composition_of_points():
    flat = Flat(3, 1.0).chart()
    points = Composite(CompositionSpec((Point(),) * 4)).chart()
    u = [0.1, -0.2, 0.3]
    a, b = eq.invariants(flat, u), eq.invariants(points, u)
    for x, y in ((a.frame.g, b.frame.g), (a.A, b.A), (a.Gamma, b.Gamma)):
        np.testing.assert_allclose(x, y, atol=1e-9)
    assert a.L1 == pytest.approx(b.L1, rel=1e-9)


def test_hyperboloid_certification():
    h = make_hyperboloid_factor(2)
    assert h.L1 < 0
    assert h.L1 == pytest.approx(-1.0, rel=1e-9)
    assert h.scale > 0


def test_hyperboloid_curve_apolarity():
    inv = eq.invariants(Hyperboloid(1).chart(), [0.4])
    assert eq.apolarity_residual(inv) <= 1e-10


@pytest.mark.parametrize(
    "factor",
    [Flat(1, 1.0), Flat(2, 0.5), Flat(3, 3.0), Hyperboloid(1), Hyperboloid(2),
     Composite(CompositionSpec((Point(), Hyperboloid(1)), (1.5, 0.7)))],
    ids=lambda f: type(f).__name__,
)
def test_catalog_factors_are_centered_hyperbolic_spheres(factor, rng):
    chart = factor.chart()
    verdict = eq.classify_sphere(chart, chart.sample(rng, 20), 1e-9)
    assert verdict.is_hyperbolic
    assert verdict.center_residual <= 1e-8
    assert verdict.L1 == pytest.approx(factor.L1, rel=1e-9)


def test_factor_invariants_closed_form_matches_engine():
    f = Flat(2, 1.0)
    closed, engine = factor_invariants(f, [0.0, 0.0]), factor_invariants(f, [0.0, 0.0], method="engine")
    assert closed.source == "closed" and engine.source == "engine"
    np.testing.assert_allclose(closed.g, engine.g, atol=1e-10)
    np.testing.assert_allclose(closed.A, engine.A, atol=1e-10)
    np.testing.assert_allclose(closed.g, flat_closed_forms(2, 1.0)["g"], atol=1e-14)


def test_point_invariants_are_empty():
    data = factor_invariants(Point(1.0))
    assert data.L1 == -1.0 and data.g.shape == (0, 0) and data.A.shape == (0, 0, 0)


def test_composite_of_two_points_matches_flat_line():
    comp = factor_invariants(Composite(CompositionSpec((Point(), Point()))), [0.2])
    flat = factor_invariants(Flat(1, 1.0), [0.2])
    np.testing.assert_allclose(comp.g, flat.g, atol=1e-14)
    assert comp.L1 == pytest.approx(flat.L1)


@pytest.mark.parametrize("bad", [lambda: Flat(0, 1.0), lambda: Flat(2, -1.0), lambda: Hyperboloid(0)])
def test_invalid_parameters(bad):
    with pytest.raises(FactorError):
        bad()
