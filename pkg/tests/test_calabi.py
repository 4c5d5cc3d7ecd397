from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from affine_calabi import equiaffine as eq
from affine_calabi import jets
from affine_calabi.calabi import (
    CompositionError,
    CompositionSpec,
    compose,
    exponent_identities,
    is_rational_exponent_exact,
    layout,
    mean_curvature,
    mean_curvature_vectors,
    normalization_constants,
    predict_all,
    structure_constant,
    weight_functions,
)
from affine_calabi.factors import Composite, Flat, Hyperboloid, Point

P = Point()
MIXED = [
    CompositionSpec((P, P)),
    CompositionSpec((P, Flat(2, 1.0), Hyperboloid(1)), (1.3, 0.7, 2.0)),
    CompositionSpec((Hyperboloid(2), P, Flat(1, 2.0)), (0.6, 1.5, 2.2)),
    CompositionSpec((Composite(CompositionSpec((P, Hyperboloid(1)), (2.0, 1.0))), P, Hyperboloid(1)), (0.9, 1.4, 2.0)),
]


def _spec_with_dims(dims):
    factors = tuple(P if d == 0 else Flat(d, 1.0) for d in dims)
    return CompositionSpec(factors)


def test_layout_examples():
    lay = layout(_spec_with_dims((0, 2, 1)))
    assert lay.f == (1, 4, 6) and lay.n == 5
    assert lay.offsets == (2, 2, 4)
    lay = layout(_spec_with_dims((0, 0)))
    assert lay.f == (1, 2) and lay.n == 1
    with pytest.raises(CompositionError):
        CompositionSpec((Flat(3, 1.0),))


def test_weight_functions_derivatives():
    spec = _spec_with_dims((0, 2, 1))
    lay = layout(spec)
    t = [0.2, -0.1]
    e = weight_functions(spec, t, order=2)
    at_zero = weight_functions(spec, [0.0, 0.0])
    np.testing.assert_allclose([x.value for x in at_zero], 1.0)
    for a in range(1, 3):
        ea = e[a].value
        assert jets.derivative(e[a], (1, 0) if a == 1 else (0, 1)) == pytest.approx(-ea / (lay.dims[a] + 1))
    for a in range(2):
        for lam in range(a, 2):
            alpha = [0, 0]
            alpha[lam] = 2
            assert jets.derivative(e[a], alpha) == pytest.approx(e[a].value / lay.f[lam] ** 2)


def test_weight_product_is_unimodular():
    for dims in [(0, 0), (0, 2, 1), (3, 0, 1, 2)]:
        assert is_rational_exponent_exact(_spec_with_dims(dims))


def test_compose_examples():
    chart = compose(CompositionSpec((P, P)))
    np.testing.assert_allclose(chart.position([0.3]), [np.exp(0.3), np.exp(-0.3)])
    chart = compose(CompositionSpec((P, Flat(1, 1.0))))
    assert chart.dim == 2 and chart.ambient_dim == 3
    spec = MIXED[1]
    lay = layout(spec)
    base = np.zeros(lay.n)
    pos = compose(spec).position(base)
    for a, f in enumerate(spec.factors):
        expected = spec.weights[a] * f.chart().position(base[lay.block(a)])
        np.testing.assert_allclose(pos[lay.ambient_block(a)], expected)


def test_structure_constant_examples():
    spec = CompositionSpec((P, P))
    assert structure_constant(spec) == pytest.approx(2 ** (-1 / 3))
    assert mean_curvature(spec) == pytest.approx(-(2 ** (-2 / 3)))
    for r in (2, 3, 4):
        flat = Flat(r - 1, 1.0)
        assert mean_curvature(CompositionSpec((P,) * r)) == pytest.approx(flat.L1, rel=1e-14)
    spec = CompositionSpec((P, P), (2.0, 5.0))
    assert structure_constant(spec) == pytest.approx(50 ** (1 / 3))


@given(st.floats(0.2, 5.0), st.lists(st.floats(0.5, 3.0), min_size=3, max_size=3))
def test_structure_constant_weight_scaling(mu, weights):
    factors = (P, Flat(2, 1.0), Hyperboloid(1))
    dims = [0, 2, 1]
    n = sum(dims) + 2
    a = structure_constant(CompositionSpec(factors, tuple(weights)))
    b = structure_constant(CompositionSpec(factors, tuple(mu * w for w in weights)))
    power = sum(2 * (d + 1) for d in dims) / (n + 2)
    assert b == pytest.approx(a * mu**power, rel=1e-12)


def test_normalization_constant_examples():
    assert normalization_constants(CompositionSpec((P, P))) == pytest.approx((1.0, 1.0))
    c, cp = normalization_constants(CompositionSpec((P, P), (2.0, 3.0)))
    assert cp == pytest.approx(6.0) and c == pytest.approx(6**0.5)
    c, cp = normalization_constants(CompositionSpec((Flat(1, 1.0), P), (2.0, 1.0)))
    assert cp == pytest.approx(4.0) and c == pytest.approx(4 ** (1 / 3))


def test_prediction_examples():
    pred = predict_all(CompositionSpec((P, P)), [0.1])
    assert pred.g[0, 0] == pytest.approx(2 * pred.C) and pred.g[0, 0] == pytest.approx(2 ** (2 / 3))
    pred = predict_all(CompositionSpec((P, P, P)), [0.0, 0.0])
    assert pred.A[0, 0, 1] == pytest.approx(3 ** (-0.25))
    spec = MIXED[1]
    lay = layout(spec)
    pred = predict_all(spec, np.zeros(lay.n))
    blk = lay.block(1)
    d = pred.factor_data[1]
    np.testing.assert_allclose(pred.A[blk, blk, 0], -pred.g[blk, blk] / 3)
    np.testing.assert_allclose(pred.A[blk, blk, 0], d.L1 * pred.C * d.g)


@pytest.mark.parametrize("spec", MIXED, ids=lambda s: s.label)
def test_predictions_match_engine(spec, rng):
    chart = compose(spec)
    for u in chart.sample(rng, 3):
        inv, pred = eq.invariants(chart, u), predict_all(spec, u)
        scale = np.abs(pred.g).max()
        np.testing.assert_allclose(inv.frame.g, pred.g, atol=1e-9 * scale)
        np.testing.assert_allclose(inv.A, pred.A, atol=1e-8 * scale)
        np.testing.assert_allclose(inv.Gamma, pred.Gamma, atol=1e-8)
        assert inv.frame.H == pytest.approx(pred.H, rel=1e-8)
        assert inv.L1 == pytest.approx(pred.L1, rel=1e-9)
        assert np.abs(inv.A[~pred.A_support]).max(initial=0) <= 1e-10 * scale


@pytest.mark.parametrize("spec", MIXED, ids=lambda s: s.label)
def test_christoffels_are_consistent_with_metric_and_cubic_form(spec):
    # Gamma = Gamma_LC + g^{-1} A; the t-block metric is constant so Gamma_LC vanishes off factor blocks
    pred = predict_all(spec, np.zeros(spec.n))
    lay = layout(spec)
    g_inv = np.linalg.inv(pred.g)
    lc = pred.Gamma - np.einsum("kl,ijl->kij", g_inv, pred.A)
    for a in range(lay.K):
        blk = lay.block(a)
        lc[blk, blk, blk] = 0.0
    np.testing.assert_allclose(lc, 0.0, atol=1e-12)


def test_mean_curvature_vector_pairings():
    spec = MIXED[2]
    u = np.zeros(spec.n)
    inv = eq.invariants(compose(spec), u)
    m = mean_curvature_vectors(spec, u, inv.frame.g, inv.A)
    assert m.route_residual <= 1e-9
    L1 = mean_curvature(spec)
    off = ~np.eye(len(m.factors), dtype=bool)
    np.testing.assert_allclose(m.pairings[off], L1, rtol=1e-9)
    for row, a in enumerate(m.factors):
        na = spec.dims[a]
        assert m.pairings[row, row] == pytest.approx((spec.n - na) / (na + 1) * (-L1), rel=1e-9)


def test_mean_curvature_vectors_two_routes_small():
    spec = CompositionSpec((P, Hyperboloid(1)))
    u = np.array([0.2, 0.3])
    inv = eq.invariants(compose(spec), u)
    assert mean_curvature_vectors(spec, u, inv.frame.g, inv.A).route_residual <= 1e-9
    with pytest.raises(CompositionError):
        mean_curvature_vectors(CompositionSpec((P, P)))


def test_associativity_exponents_exact():
    for dims in [(0, 0, 0), (1, 2, 3), (2, 0, 5)]:
        for left, right in exponent_identities(*dims).values():
            assert left == right
            assert all(isinstance(v, Fraction) for v in left + right)
