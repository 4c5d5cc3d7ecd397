"""Truncated multivariate Taylor arithmetic (forward-mode jets).

A :class:`Jet` holds the Taylor-normalized coefficients
``c_alpha = d^alpha f / alpha!`` of a smooth function of ``n_vars`` variables
around a base point, for every multi-index ``|alpha| <= order``. Coefficients
are stored densely in graded order, indexed by sorted variable tuples, so the
monomial ``u0**2 * u2`` lives under the key ``(0, 0, 2)`` and truncation to a
lower order is a prefix slice.

Values may be tensor-valued: ``coeffs`` has shape ``(space.size, *shape)``.
Elementwise arithmetic broadcasts over the value shape, and :func:`einsum`
contracts tensor-valued jets, which is what the geometry code uses for
matrix products, inverses and determinants of jets.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from numbers import Integral, Real
from typing import Sequence

import numpy as np

MAX_ORDER = 4


class JetError(ValueError):
    """Invalid jet operation (order mismatch, bad domain, bad multi-index)."""


class JetSpace:
    """Monomial bookkeeping shared by every jet with the same (n_vars, order)."""

    def __init__(self, n_vars: int, order: int):
        if not isinstance(n_vars, Integral) or n_vars < 0:
            raise JetError(f"n_vars must be a nonnegative integer, got {n_vars!r}")
        if not isinstance(order, Integral) or not 0 <= order <= MAX_ORDER:
            raise JetError(f"order must be an integer in [0, {MAX_ORDER}], got {order!r}")
        self.n_vars = int(n_vars)
        self.order = int(order)
        monomials: list[tuple[int, ...]] = []
        for d in range(self.order + 1):
            monomials.extend(itertools.combinations_with_replacement(range(self.n_vars), d))
        self.monomials = tuple(monomials)
        self.index = {m: i for i, m in enumerate(self.monomials)}
        self.size = len(self.monomials)
        self.degree = np.array([len(m) for m in self.monomials], dtype=int)
        # number of monomials of degree <= d, for d = 0..order
        self._upto = [int(np.searchsorted(self.degree, d, side="right")) for d in range(self.order + 1)]
        self._product = None
        self._diff: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def __repr__(self) -> str:
        return f"JetSpace(n_vars={self.n_vars}, order={self.order})"

    def count_upto(self, degree: int) -> int:
        return self._upto[degree]

    @property
    def product_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pairs (left, right) with deg(left)+deg(right) <= order, grouped by target.

        Returns ``(left, right, starts)``; pairs are sorted by target monomial
        and ``starts[k]`` is the first pair contributing to monomial ``k``.
        """
        if self._product is None:
            left, right, target = [], [], []
            for i, a in enumerate(self.monomials):
                for j in range(self._upto[self.order - len(a)]):
                    left.append(i)
                    right.append(j)
                    target.append(self.index[tuple(sorted(a + self.monomials[j]))])
            target = np.asarray(target)
            perm = np.argsort(target, kind="stable")
            target = target[perm]
            starts = np.searchsorted(target, np.arange(self.size))
            self._product = (np.asarray(left)[perm], np.asarray(right)[perm], starts)
        return self._product

    def diff_table(self, var: int) -> tuple[np.ndarray, np.ndarray]:
        """Map coefficients of this space to those of d/du_var in the order-1 space."""
        if var not in self._diff:
            lower = jet_space(self.n_vars, self.order - 1)
            src = np.empty(lower.size, dtype=int)
            mult = np.empty(lower.size)
            for k, beta in enumerate(lower.monomials):
                src[k] = self.index[tuple(sorted(beta + (var,)))]
                mult[k] = beta.count(var) + 1
            self._diff[var] = (src, mult)
        return self._diff[var]


@lru_cache(maxsize=None)
def jet_space(n_vars: int, order: int) -> JetSpace:
    return JetSpace(n_vars, order)


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=float)


def _expand(coeffs: np.ndarray, rank: int) -> np.ndarray:
    """Insert value axes right after the coefficient axis up to ``rank`` value dims."""
    missing = rank - (coeffs.ndim - 1)
    if missing <= 0:
        return coeffs
    return coeffs.reshape(coeffs.shape[:1] + (1,) * missing + coeffs.shape[1:])


class Jet:
    """Immutable truncated Taylor expansion; see module docstring for conventions."""

    __slots__ = ("space", "coeffs")
    __array_priority__ = 1000

    def __init__(self, space: JetSpace, coeffs):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.ndim == 0 or coeffs.shape[0] != space.size:
            raise JetError(f"expected {space.size} coefficients, got array of shape {coeffs.shape}")
        coeffs.flags.writeable = False
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "coeffs", coeffs)

    def __setattr__(self, name, value):
        raise AttributeError("Jet is immutable")

    # -- basic properties ----------------------------------------------------
    @property
    def n_vars(self) -> int:
        return self.space.n_vars

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[1:]

    @property
    def value(self):
        v = self.coeffs[0]
        return float(v) if v.ndim == 0 else v.copy()

    def __repr__(self) -> str:
        return f"Jet(n_vars={self.n_vars}, order={self.order}, shape={self.shape})"

    def coefficient(self, monomial: Sequence[int]) -> np.ndarray | float:
        """Taylor coefficient for a sorted variable tuple such as ``(0, 0, 2)``."""
        key = tuple(sorted(monomial))
        if key not in self.space.index:
            raise JetError(f"monomial {key} not in {self.space}")
        c = self.coeffs[self.space.index[key]]
        return float(c) if c.ndim == 0 else c.copy()

    # -- structural operations ----------------------------------------------
    def __getitem__(self, idx) -> Jet:
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.space, self.coeffs[(slice(None),) + idx])

    def __len__(self) -> int:
        if not self.shape:
            raise TypeError("scalar jet has no len()")
        return self.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def T(self) -> Jet:
        return self.transpose()

    def transpose(self, *axes: int) -> Jet:
        rank = len(self.shape)
        axes = axes or tuple(reversed(range(rank)))
        return Jet(self.space, self.coeffs.transpose((0,) + tuple(a + 1 for a in axes)))

    def reshape(self, *shape: int) -> Jet:
        return Jet(self.space, self.coeffs.reshape((self.space.size,) + tuple(shape)))

    def truncate(self, order: int) -> Jet:
        if order > self.order:
            raise JetError(f"cannot raise order {self.order} to {order}")
        space = jet_space(self.n_vars, order)
        return Jet(space, self.coeffs[: space.size])

    def diff(self, var: int) -> Jet:
        """Partial derivative in variable ``var``; the result has order one lower."""
        if self.order == 0:
            raise JetError("cannot differentiate an order-0 jet")
        if not 0 <= var < self.n_vars:
            raise JetError(f"variable index {var} out of range for {self.n_vars} variables")
        src, mult = self.space.diff_table(var)
        lower = jet_space(self.n_vars, self.order - 1)
        c = self.coeffs[src] * mult.reshape((-1,) + (1,) * len(self.shape))
        return Jet(lower, c)

    # -- arithmetic ------------------------------------------------------------
    def _check(self, other: Jet) -> None:
        if other.space is not self.space:
            raise JetError(f"mixing jets from {self.space} and {other.space}")

    def __add__(self, other) -> Jet:
        if isinstance(other, Jet):
            self._check(other)
            rank = max(len(self.shape), len(other.shape))
            return Jet(self.space, _expand(self.coeffs, rank) + _expand(other.coeffs, rank))
        other = _as_array(other)
        rank = max(len(self.shape), other.ndim)
        c = np.array(np.broadcast_to(_expand(self.coeffs, rank),
                                     (self.space.size,) + np.broadcast_shapes(self.shape, other.shape)))
        c[0] = c[0] + other
        return Jet(self.space, c)

    __radd__ = __add__

    def __neg__(self) -> Jet:
        return Jet(self.space, -self.coeffs)

    def __sub__(self, other) -> Jet:
        return self + (-other)

    def __rsub__(self, other) -> Jet:
        return (-self) + other

    def __mul__(self, other) -> Jet:
        if isinstance(other, Jet):
            self._check(other)
            rank = max(len(self.shape), len(other.shape))
            left, right, starts = self.space.product_table
            a = _expand(self.coeffs, rank)[left]
            b = _expand(other.coeffs, rank)[right]
            return Jet(self.space, np.add.reduceat(a * b, starts, axis=0))
        other = _as_array(other)
        rank = max(len(self.shape), other.ndim)
        return Jet(self.space, _expand(self.coeffs, rank) * other)

    __rmul__ = __mul__

    def __truediv__(self, other) -> Jet:
        if isinstance(other, Jet):
            return self * reciprocal(other)
        return self * (1.0 / _as_array(other))

    def __rtruediv__(self, other) -> Jet:
        return reciprocal(self) * _as_array(other)

    def __pow__(self, exponent) -> Jet:
        if isinstance(exponent, Integral) and exponent >= 0:
            result = constant(self.space, np.ones(self.shape))
            for _ in range(int(exponent)):
                result = result * self
            return result
        return pow_real(self, float(exponent))

    def __matmul__(self, other) -> Jet:
        return einsum("...ij,...jk->...ik", self, other)

    def __rmatmul__(self, other) -> Jet:
        return einsum("...ij,...jk->...ik", other, self)


# -- constructors ----------------------------------------------------------


def constant(space: JetSpace, value) -> Jet:
    value = _as_array(value)
    c = np.zeros((space.size,) + value.shape)
    c[0] = value
    return Jet(space, c)


def seed_point(u: Sequence[float], order: int) -> list[Jet]:
    """One jet per coordinate: value ``u[i]``, unit slope in slot ``i``."""
    u = np.atleast_1d(_as_array(u))
    if u.ndim != 1:
        raise JetError("u must be a coordinate vector")
    if not np.all(np.isfinite(u)):
        raise JetError("u must be finite")
    space = jet_space(len(u), order)
    jets = []
    for i, ui in enumerate(u):
        c = np.zeros(space.size)
        c[0] = ui
        if order >= 1:
            c[space.index[(i,)]] = 1.0
        jets.append(Jet(space, c))
    return jets


def stack(jets: Sequence[Jet], axis: int = 0) -> Jet:
    if not jets:
        raise JetError("cannot stack an empty sequence")
    space = jets[0].space
    for j in jets[1:]:
        if j.space is not space:
            raise JetError("cannot stack jets from different spaces")
    return Jet(space, np.stack([j.coeffs for j in jets], axis=axis + 1 if axis >= 0 else axis))


def concatenate(jets: Sequence[Jet], axis: int = 0) -> Jet:
    space = jets[0].space
    for j in jets[1:]:
        if j.space is not space:
            raise JetError("cannot concatenate jets from different spaces")
    return Jet(space, np.concatenate([j.coeffs for j in jets], axis=axis + 1 if axis >= 0 else axis))


def sym(a: Jet) -> Jet:
    return 0.5 * (a + a.T)


# -- elementwise series ------------------------------------------------------


def _series(a: Jet, coefs: Sequence[np.ndarray]) -> Jet:
    """Evaluate sum_k coefs[k] * (a - a0)**k by Horner; (a - a0) is nilpotent."""
    d = a - a.coeffs[0]
    result = constant(a.space, coefs[a.order])
    for k in range(a.order - 1, -1, -1):
        result = result * d + coefs[k]
    return result


def exp(a: Jet) -> Jet:
    e0 = np.exp(a.coeffs[0])
    return _series(a, [e0 / math.factorial(k) for k in range(a.order + 1)])


def log(a: Jet) -> Jet:
    a0 = a.coeffs[0]
    if np.any(a0 <= 0):
        raise JetError("ln of a jet with nonpositive value part")
    coefs = [np.log(a0)] + [(-1.0) ** (k + 1) / (k * a0**k) for k in range(1, a.order + 1)]
    return _series(a, coefs)


def pow_real(a: Jet, p: float) -> Jet:
    a0 = a.coeffs[0]
    if np.any(a0 <= 0):
        raise JetError("real power of a jet with nonpositive value part")
    coefs = []
    binom = 1.0
    for k in range(a.order + 1):
        coefs.append(binom * a0 ** (p - k))
        binom *= (p - k) / (k + 1)
    return _series(a, coefs)


def sqrt(a: Jet) -> Jet:
    a0 = a.coeffs[0]
    if np.any(a0 <= 0):
        raise JetError("sqrt of a jet with nonpositive value part")
    return pow_real(a, 0.5)


def reciprocal(a: Jet) -> Jet:
    a0 = a.coeffs[0]
    if np.any(a0 == 0):
        raise JetError("division by a jet with zero value part")
    return _series(a, [(-1.0) ** k / a0 ** (k + 1) for k in range(a.order + 1)])


def jet_arith(kind: str, *operands) -> Jet:
    """Dispatch by name: add, sub, mul, div, neg, exp, ln, sqrt, pow_real."""
    binary = {
        "add": lambda a, b: a + b,
        "sub": lambda a, b: a - b,
        "mul": lambda a, b: a * b,
        "div": lambda a, b: a / b,
        "pow_real": lambda a, p: pow_real(a, float(p)),
    }
    unary = {"neg": lambda a: -a, "exp": exp, "ln": log, "sqrt": sqrt}
    if kind in binary:
        if len(operands) != 2:
            raise JetError(f"{kind} takes two operands")
        a, b = operands
        if not isinstance(a, Jet):
            raise JetError(f"{kind}: first operand must be a Jet")
        return binary[kind](a, b)
    if kind in unary:
        if len(operands) != 1 or not isinstance(operands[0], Jet):
            raise JetError(f"{kind} takes one Jet operand")
        return unary[kind](operands[0])
    raise JetError(f"unknown jet operation {kind!r}")


def derivative(j: Jet, alpha: Sequence[int]) -> float | np.ndarray:
    """Partial derivative d^alpha f at the base point (alpha is an exponent vector)."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != j.n_vars or any(a < 0 for a in alpha):
        raise JetError(f"multi-index {alpha} does not match {j.n_vars} variables")
    if sum(alpha) > j.order:
        raise JetError(f"|alpha| = {sum(alpha)} exceeds jet order {j.order}")
    monomial = tuple(v for v, a in enumerate(alpha) for _ in range(a))
    scale = math.prod(math.factorial(a) for a in alpha)
    c = j.coeffs[j.space.index[monomial]] * scale
    return float(c) if np.ndim(c) == 0 else c


# -- tensor contractions -----------------------------------------------------

_BATCH = "Z"


def einsum(subscripts: str, *operands) -> Jet:
    """``np.einsum`` over tensor-valued jets; at most two operands may be jets.

    Two jet operands are combined with the truncated Cauchy product, so the
    result equals the Taylor expansion of the contracted product.
    """
    if _BATCH in subscripts:
        raise JetError(f"subscript letter {_BATCH!r} is reserved")
    inputs, output = subscripts.replace(" ", "").split("->")
    terms = inputs.split(",")
    if len(terms) != len(operands):
        raise JetError("operand count does not match subscripts")
    jet_pos = [i for i, op in enumerate(operands) if isinstance(op, Jet)]
    if not jet_pos:
        raise JetError("einsum needs at least one Jet operand")
    if len(jet_pos) > 2:
        raise JetError("einsum supports at most two Jet operands")
    space = operands[jet_pos[0]].space
    for i in jet_pos[1:]:
        operands[jet_pos[0]]._check(operands[i])
    arrays = []
    new_terms = []
    if len(jet_pos) == 1:
        for i, (term, op) in enumerate(zip(terms, operands)):
            if i in jet_pos:
                arrays.append(op.coeffs)
                new_terms.append(_BATCH + term)
            else:
                arrays.append(_as_array(op))
                new_terms.append(term)
        out = np.einsum(",".join(new_terms) + "->" + _BATCH + output, *arrays)
        return Jet(space, out)
    left, right, starts = space.product_table
    gathered = {jet_pos[0]: operands[jet_pos[0]].coeffs[left],
                jet_pos[1]: operands[jet_pos[1]].coeffs[right]}
    for i, (term, op) in enumerate(zip(terms, operands)):
        if i in gathered:
            arrays.append(gathered[i])
            new_terms.append(_BATCH + term)
        else:
            arrays.append(_as_array(op))
            new_terms.append(term)
    prod = np.einsum(",".join(new_terms) + "->" + _BATCH + output, *arrays)
    return Jet(space, np.add.reduceat(prod, starts, axis=0))


def trace(a: Jet) -> Jet:
    return einsum("ii->", a)


def inv(a: Jet) -> Jet:
    """Inverse of a square-matrix-valued jet via the Neumann series around a0."""
    if len(a.shape) != 2 or a.shape[0] != a.shape[1]:
        raise JetError(f"inv needs a square matrix jet, got shape {a.shape}")
    a0_inv = np.linalg.inv(a.coeffs[0])
    m = einsum("ij,jk->ik", a0_inv, a - a.coeffs[0])
    eye = np.eye(a.shape[0])
    s = constant(a.space, eye)
    for _ in range(a.order):
        s = eye - einsum("ij,jk->ik", m, s)
    return einsum("ij,jk->ik", s, a0_inv)


def logdet_increment(a: Jet) -> Jet:
    """tr log(a0^{-1} a): the jet of log|det a| - log|det a0| (Jacobi's formula, all orders)."""
    if len(a.shape) != 2 or a.shape[0] != a.shape[1]:
        raise JetError(f"det needs a square matrix jet, got shape {a.shape}")
    m = einsum("ij,jk->ik", np.linalg.inv(a.coeffs[0]), a - a.coeffs[0])
    total = constant(a.space, 0.0)
    power = m
    for k in range(1, a.order + 1):
        total = total + trace(power) * ((-1.0) ** (k + 1) / k)
        if k < a.order:
            power = einsum("ij,jk->ik", power, m)
    return total


def det(a: Jet) -> Jet:
    return exp(logdet_increment(a)) * float(np.linalg.det(a.coeffs[0]))


def solve(a: Jet, b) -> Jet:
    """Solve a @ y = b for matrix jet ``a`` and vector/matrix jet or array ``b``."""
    ai = inv(a)
    b_rank = len(b.shape) if isinstance(b, Jet) else np.ndim(b)
    if b_rank == 1:
        return einsum("ij,j->i", ai, b)
    return einsum("ij,j...->i...", ai, b)
