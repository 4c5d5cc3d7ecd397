import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from affine_calabi import jets
from affine_calabi.jets import JetError
from expr_oracle import compare, random_case

finite = st.floats(-1.5, 1.5, allow_nan=False)


def test_exp_univariate_coefficients():
    (t,) = jets.seed_point([0.0], 3)
    np.testing.assert_allclose(jets.exp(t).coeffs, [1, 1, 0.5, 1 / 6], rtol=1e-15)


def test_square_at_three():
    (t,) = jets.seed_point([3.0], 2)
    np.testing.assert_allclose((t * t).coeffs, [9, 6, 1])


def test_exp_of_scaled_variable():
    (t,) = jets.seed_point([0.0], 2)
    np.testing.assert_allclose(jets.exp(t * -0.5).coeffs, [1, -0.5, 0.125])


def test_mixed_partial_of_monomial():
    t, s = jets.seed_point([0.7, -0.4], 3)
    assert jets.derivative(t * t * s, (1, 1)) == pytest.approx(2 * 0.7)
    assert jets.derivative(t * t * s, (2, 1)) == pytest.approx(2.0)


def test_graded_layout_is_prefix_truncation():
    space = jets.jet_space(3, 4)
    assert space.size == math.comb(3 + 4, 4)
    low = jets.jet_space(3, 2)
    assert space.monomials[: low.size] == low.monomials


def test_mixing_spaces_is_rejected():
    (a,) = jets.seed_point([0.0], 2)
    (b,) = jets.seed_point([0.0], 3)
    with pytest.raises(JetError):
        a + b


def test_order_above_limit_is_rejected():
    with pytest.raises(JetError):
        jets.seed_point([0.0], jets.MAX_ORDER + 1)


def test_log_rejects_nonpositive():
    (t,) = jets.seed_point([0.0], 2)
    with pytest.raises(JetError):
        jets.log(t)


@given(st.lists(finite, min_size=2, max_size=3), st.integers(1, 4))
def test_diff_matches_derivative(u, order):
    x = jets.seed_point(u, order)
    f = jets.exp(x[0] * 0.3) * x[1] + x[-1] * x[0] * x[0]
    for var in range(len(u)):
        df = f.diff(var)
        for alpha in itertools.product(range(order), repeat=len(u)):
            if sum(alpha) > order - 1:
                continue
            shifted = list(alpha)
            shifted[var] += 1
            assert jets.derivative(df, alpha) == pytest.approx(jets.derivative(f, shifted), rel=1e-12, abs=1e-12)


@given(st.lists(finite, min_size=4, max_size=4), st.lists(finite, min_size=2, max_size=2))
def test_matrix_inverse_and_determinant(entries, u):
    x, y = jets.seed_point(u, 3)
    base = np.array(entries).reshape(2, 2) + 4 * np.eye(2)
    m = jets.stack([jets.stack([x * 0.0 + base[0, 0] + x * y, y * 0.5 + base[0, 1]]),
                    jets.stack([x * 0.3 + base[1, 0], jets.exp(y * 0.2) + base[1, 1]])])
    eye = jets.einsum("ij,jk->ik", m, jets.inv(m))
    np.testing.assert_allclose(eye.coeffs[0], np.eye(2), atol=1e-13)
    np.testing.assert_allclose(eye.coeffs[1:], 0.0, atol=1e-12)
    explicit = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    np.testing.assert_allclose(jets.det(m).coeffs, explicit.coeffs, rtol=1e-12, atol=1e-12)


@given(st.lists(finite, min_size=2, max_size=2))
def test_solve_agrees_with_inverse(u):
    x, y = jets.seed_point(u, 2)
    a = jets.stack([jets.stack([x + 3.0, y]), jets.stack([x * y, y * y + 2.0])])
    b = jets.stack([jets.exp(x), x * 0.0 + 1.0])
    sol = jets.solve(a, b)
    back = jets.einsum("ij,j->i", a, sol)
    np.testing.assert_allclose(back.coeffs, b.coeffs, atol=1e-12)


@given(st.floats(0.2, 3.0), st.floats(-2.0, 2.0))
def test_real_power_chain(a0, p):
    (t,) = jets.seed_point([a0], 4)
    f = jets.pow_real(t, p)
    for k in range(5):
        exact = math.prod(p - i for i in range(k)) * a0 ** (p - k)
        assert jets.derivative(f, (k,)) == pytest.approx(exact, rel=1e-12, abs=1e-12)


def test_einsum_two_jets_is_cauchy_product():
    x, y = jets.seed_point([0.2, 0.1], 3)
    v = jets.stack([x, y])
    w = jets.stack([jets.exp(x), y * y])
    dot = jets.einsum("i,i->", v, w)
    np.testing.assert_allclose(dot.coeffs, (x * jets.exp(x) + y * y * y).coeffs, atol=1e-15)


def test_jet_arith_dispatch():
    (t,) = jets.seed_point([0.5], 2)
    np.testing.assert_allclose(jets.jet_arith("ln", jets.jet_arith("exp", t)).coeffs, t.coeffs, atol=1e-15)
    with pytest.raises(JetError):
        jets.jet_arith("tan", t)


@pytest.mark.parametrize("seed", range(20))
def test_random_expressions_against_sympy(seed):
    expr, fn, n_vars, point = random_case(1000 + seed)
    assert compare(expr, fn, n_vars, point, 4) <= 1e-13
