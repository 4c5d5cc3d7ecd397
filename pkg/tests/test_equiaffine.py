import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from affine_calabi import equiaffine as eq
from affine_calabi import jets
from affine_calabi.factors import Flat, Hyperboloid
from affine_calabi.verify import random_unimodular

HYPERBOLA = eq.ImmersionChart(1, lambda s, c: [jets.exp(c[0]), jets.exp(-c[0])], name="hyperbola")


def convex_graph(seed: int, n: int) -> eq.ImmersionChart:
    """A generic locally strongly convex graph near the origin."""
    r = np.random.default_rng(seed)
    quad = r.uniform(0.5, 2.0, n)
    cubic = r.uniform(-0.3, 0.3, (n, n, n))
    lin = r.uniform(-0.5, 0.5, n)
    amp = r.uniform(0.05, 0.2)

    def f(c):
        out = c[0] * c[0] * quad[0]
        for i in range(1, n):
            out = out + c[i] * c[i] * quad[i]
        for i in range(n):
            for j in range(n):
                out = out + c[i] * c[j] * c[(i + j) % n] * cubic[i, j, (i + j) % n]
        arg = c[0] * lin[0]
        for i in range(1, n):
            arg = arg + c[i] * lin[i]
        return out + jets.exp(arg) * amp

    return eq.graph_chart(f, n, np.tile([-0.3, 0.3], (n, 1)), f"graph{seed}")


def test_hyperbola_metric_data():
    frame = eq.blaschke_data(HYPERBOLA, [0.0])
    assert frame.h[0, 0] == pytest.approx(2.0)
    assert frame.H == pytest.approx(2.0)
    assert frame.g[0, 0] == pytest.approx(2 ** (2 / 3))
    assert frame.sign_flip in (1, -1)


def test_hyperbola_normal_connection_and_shape():
    L1 = -(2 ** (-2 / 3))
    np.testing.assert_allclose(eq.affine_normal_field(HYPERBOLA, [0.0]), 2 ** (-2 / 3) * np.ones(2), rtol=1e-13)
    assert abs(eq.induced_connection(HYPERBOLA, [0.0])[0, 0, 0]) < 1e-13
    assert abs(eq.fubini_pick_form(HYPERBOLA, [0.4])[0, 0, 0]) < 1e-13
    inv = eq.invariants(HYPERBOLA, [0.3])
    assert inv.L1 == pytest.approx(L1, rel=1e-13)
    np.testing.assert_allclose(inv.shape_operator, [[L1]], rtol=1e-13)
    assert inv.J is None
    np.testing.assert_array_equal(inv.R, 0.0)


def test_hyperbola_is_proper_sphere():
    verdict = eq.classify_sphere(HYPERBOLA, [[-0.5], [0.0], [0.7]])
    assert verdict.is_proper_sphere and verdict.is_hyperbolic
    assert verdict.L1 == pytest.approx(-(2 ** (-2 / 3)), rel=1e-12)
    assert verdict.center_residual <= 1e-10


def test_flat_factor_closed_values_at_origin():
    chart = Flat(2, 1.0).chart()
    inv = eq.invariants(chart, [0.0, 0.0])
    np.testing.assert_allclose(inv.frame.g, np.diag([2.0, 1.5]) * 3 ** (-0.25), rtol=1e-12)
    assert inv.A[0, 0, 1] == pytest.approx(3 ** (-0.25), rel=1e-12)
    assert inv.J == pytest.approx(3 ** (-0.75), rel=1e-12)
    assert eq.pick_invariant(inv.frame, inv.A) == pytest.approx(inv.J)


def test_flat_factor_normal_is_radial():
    chart = Flat(1, 1.0).chart()
    for t in (-0.4, 0.0, 0.3):
        inv = eq.invariants(chart, [t])
        np.testing.assert_allclose(inv.xi, 2 ** (-2 / 3) * inv.position, rtol=1e-12)


def test_flat_pick_invariant_equals_minus_mean_curvature():
    inv = eq.invariants(Flat(3, 2.0).chart(), [0.1, -0.2, 0.05])
    expected = 4 ** (-0.8) * 2 ** (-0.4)
    assert inv.J == pytest.approx(expected, rel=1e-12)
    assert -inv.L1 == pytest.approx(expected, rel=1e-12)


def test_flat_factor_is_flat_and_parallel():
    inv = eq.invariants(Flat(3, 0.5).chart(), [0.2, 0.1, -0.3])
    assert np.abs(inv.R).max() < 1e-12
    assert np.abs(inv.nablaA).max() < 1e-12 * np.abs(inv.A).max()


def test_paraboloid_is_improper():
    chart = eq.graph_chart(lambda c: c[0] * c[0] + c[1] * c[1], 2, name="paraboloid")
    inv = eq.invariants(chart, [0.2, -0.3])
    assert np.abs(inv.B).max() < 1e-12
    verdict = eq.classify_sphere(chart, [[0.0, 0.0], [0.3, 0.1], [-0.2, 0.4]])
    assert not verdict.is_proper_sphere


def test_hyperboloid_eigenvalue_spread(rng):
    chart = Hyperboloid(2).chart()
    verdict = eq.classify_sphere(chart, chart.sample(rng, 20), 1e-9)
    assert verdict.is_hyperbolic
    assert verdict.eigen_spread <= 1e-9 and verdict.l1_spread <= 1e-9


def test_sphere_nabla_A_is_totally_symmetric():
    inv = eq.invariants(Hyperboloid(2).chart(), [0.3, -0.2])
    na = inv.nablaA
    np.testing.assert_allclose(na, na.transpose(0, 1, 3, 2), atol=1e-12)


def test_pick_undefined_on_curves():
    inv = eq.invariants(HYPERBOLA, [0.0])
    with pytest.raises(eq.UndefinedError):
        eq.pick_invariant(inv.frame, inv.A)


def test_degenerate_cylinder_is_rejected():
    chart = eq.graph_chart(lambda c: c[0] * c[0] + c[1] * 0.0, 2, name="cylinder")
    with pytest.raises(eq.DegenerateError):
        eq.invariants(chart, [0.1, 0.2])


def test_indefinite_metric_is_flagged():
    chart = eq.graph_chart(lambda c: c[0] * c[0] - c[1] * c[1], 2, name="saddle")
    with pytest.warns(eq.IndefiniteWarning):
        frame = eq.blaschke_data(chart, [0.1, 0.1])
    assert frame.indefinite and frame.sign_flip == 1


def test_singular_frame_and_route_mismatch_paths(monkeypatch):
    chart = convex_graph(0, 2)
    monkeypatch.setattr(eq, "SINGULAR_FRAME_COND", 0.5)
    with pytest.raises(eq.SingularFrameError):
        eq.invariants(chart, [0.0, 0.0])
    monkeypatch.setattr(eq, "SINGULAR_FRAME_COND", 1e12)
    monkeypatch.setattr(eq, "ROUTE_TOLERANCE", -1.0)
    with pytest.raises(eq.RouteMismatchError):
        eq.invariants(chart, [0.0, 0.0])


def test_chart_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        HYPERBOLA.eval([0.0, 1.0])


@given(st.integers(0, 10_000), st.integers(1, 3), st.lists(st.floats(-0.3, 0.3), min_size=3, max_size=3))
def test_identities_on_convex_graphs(seed, n, u):
    chart = convex_graph(seed, n)
    with warnings.catch_warnings():
        warnings.simplefilter("error", eq.IndefiniteWarning)
        inv = eq.invariants(chart, u[:n])
    np.testing.assert_allclose(inv.frame.g @ inv.frame.g_inv, np.eye(n), atol=1e-12)
    np.testing.assert_allclose(inv.A, inv.A.transpose(1, 0, 2), atol=1e-14)
    np.testing.assert_allclose(inv.B, inv.B.T, atol=1e-12)
    assert inv.route_mismatch <= 1e-9
    assert inv.normal_defect <= 1e-9
    assert eq.apolarity_residual(inv) <= 1e-9
    assert eq.trace_identity_residual(inv) <= 1e-8
    assert eq.codazzi_residual(inv) <= 1e-8
    assert eq.gauss_residual(inv) <= 1e-8


@pytest.mark.parametrize("seed", range(100))
def test_route_agreement_on_random_charts(seed):
    n = 1 + seed % 3
    chart = convex_graph(seed, n)
    u = np.random.default_rng(seed).uniform(-0.3, 0.3, n)
    assert eq.invariants(chart, u).route_mismatch <= 1e-9


@given(st.integers(0, 10_000), st.integers(2, 3))
def test_equiaffine_invariance(seed, n):
    r = np.random.default_rng(seed)
    chart = convex_graph(seed, n)
    T = random_unimodular(r, n + 1)
    moved = eq.transformed_chart(chart, T)
    u = r.uniform(-0.3, 0.3, n)
    a, b = eq.invariants(chart, u), eq.invariants(moved, u)
    for x, y in ((a.frame.g, b.frame.g), (a.A, b.A), (a.B, b.B)):
        np.testing.assert_allclose(y, x, atol=1e-9 * max(1.0, np.abs(x).max()))
    np.testing.assert_allclose(b.xi, T @ a.xi, atol=1e-9 * np.abs(a.xi).max())


@given(st.floats(0.3, 3.0), st.integers(1, 3))
def test_scaling_covariance(mu, n):
    chart = convex_graph(7, n)
    scaled = eq.transformed_chart(chart, mu * np.eye(n + 1))
    u = np.full(n, 0.1)
    a, b = eq.invariants(chart, u), eq.invariants(scaled, u)
    k = 2 * (n + 1) / (n + 2)
    np.testing.assert_allclose(b.frame.g, mu**k * a.frame.g, rtol=1e-10)
    assert b.L1 == pytest.approx(mu ** (-k) * a.L1, rel=1e-10, abs=1e-12)
    np.testing.assert_allclose(b.shape_operator, mu ** (-k) * a.shape_operator, atol=1e-10)
