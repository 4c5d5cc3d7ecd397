"""Calabi composition of hyperbolic affine hyperspheres and its closed forms.

Given factors x_1, ..., x_K (dimension n_a, mean curvature L1_a, common
center at the origin) and weights c_a > 0, the composition is

    x(t, p_1, ..., p_K) = (c_1 e_1 x_1(p_1), ..., c_K e_K x_K(p_K)),
    e_a = exp(-t^{a-1}/(n_a+1) + sum_{lambda >= a} t^lambda / f_lambda),
    f_a = n_1 + ... + n_a + a.

Chart coordinates are ``(t^1, ..., t^{K-1})`` followed by each factor's own
chart coordinates in order. Index arrays are 0-based: t^lambda lives at
position ``lambda - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import jets
from .equiaffine import ImmersionChart
from .factors import (
    T_BOX,
    Composite,
    FactorData,
    FactorSpec,
    Flat,
    Hyperboloid,
    Point,
    factor_invariants,
)


class CompositionError(ValueError):
    pass


@dataclass(frozen=True)
class CompositionSpec:
    factors: tuple
    weights: tuple = ()

    def __post_init__(self):
        factors = tuple(self.factors)
        if len(factors) < 2:
            raise CompositionError(f"a composition needs K >= 2 factors, got {len(factors)}")
        for f in factors:
            if not isinstance(f, (Point, Flat, Hyperboloid, Composite)):
                raise CompositionError(f"unsupported factor {f!r}")
        weights = tuple(float(w) for w in self.weights) if self.weights else (1.0,) * len(factors)
        if len(weights) != len(factors):
            raise CompositionError("one weight per factor is required")
        if not all(np.isfinite(w) and w > 0 for w in weights):
            raise CompositionError(f"weights must be positive, got {weights}")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "weights", weights)

    @property
    def K(self) -> int:
        return len(self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def r(self) -> int:
        return sum(1 for d in self.dims if d == 0)

    @property
    def s(self) -> int:
        return self.K - self.r

    @property
    def n(self) -> int:
        return self.K - 1 + sum(self.dims)

    @property
    def effective_weights(self) -> tuple[float, ...]:
        """c_a, folding a point's own value into its weight."""
        return tuple(w * f.c if isinstance(f, Point) else w for f, w in zip(self.factors, self.weights))

    @property
    def label(self) -> str:
        return "*".join(_factor_label(f) for f in self.factors)


def _factor_label(f: FactorSpec) -> str:
    if isinstance(f, Point):
        return "P"
    if isinstance(f, Flat):
        return f"F{f.n0}"
    if isinstance(f, Hyperboloid):
        return f"Q{f.n}"
    return f"({f.inner.label})"


@dataclass(frozen=True)
class IndexLayout:
    K: int
    dims: tuple[int, ...]
    f: tuple[int, ...]
    offsets: tuple[int, ...]
    ambient_offsets: tuple[int, ...]
    n: int

    def block(self, a: int) -> slice:
        """Chart-coordinate slice of factor ``a`` (0-based)."""
        return slice(self.offsets[a], self.offsets[a] + self.dims[a])

    def ambient_block(self, a: int) -> slice:
        return slice(self.ambient_offsets[a], self.ambient_offsets[a] + self.dims[a] + 1)


def layout(spec: CompositionSpec) -> IndexLayout:
    dims = spec.dims
    K = len(dims)
    f = tuple(int(v) for v in np.cumsum(dims) + np.arange(1, K + 1))
    offsets = tuple(int(v) for v in K - 1 + np.concatenate([[0], np.cumsum(dims)[:-1]]))
    ambient = tuple(int(v) for v in np.concatenate([[0], np.cumsum(np.add(dims, 1))[:-1]]))
    n = K - 1 + sum(dims)
    if f[-1] != n + 1:
        raise CompositionError(f"f_K = {f[-1]} != n + 1 = {n + 1}")
    return IndexLayout(K, dims, f, offsets, ambient, n)


def weight_matrix(spec: CompositionSpec) -> np.ndarray:
    """W with log e_a = sum_lambda W[a, lambda] t^lambda; shape (K, K-1)."""
    lay = layout(spec)
    K = lay.K
    W = np.zeros((K, K - 1))
    for a in range(K):
        if a >= 1:
            W[a, a - 1] = -1.0 / (lay.dims[a] + 1)
        for lam in range(a, K - 1):
            W[a, lam] = 1.0 / lay.f[lam]
    return W


def weight_matrix_exact(spec: CompositionSpec) -> list[list[Fraction]]:
    lay = layout(spec)
    K = lay.K
    W = [[Fraction(0)] * (K - 1) for _ in range(K)]
    for a in range(K):
        if a >= 1:
            W[a][a - 1] = Fraction(-1, lay.dims[a] + 1)
        for lam in range(a, K - 1):
            W[a][lam] = Fraction(1, lay.f[lam])
    return W


def weight_functions(spec: CompositionSpec, t, order: int = 0) -> list[jets.Jet]:
    """Jets of e_1, ..., e_K; ``t`` is a (K-1)-vector or a list of coordinate jets."""
    W = weight_matrix(spec)
    if len(t) and isinstance(t[0], jets.Jet):
        t_jets = list(t)
    else:
        t_jets = jets.seed_point(np.asarray(t, dtype=float), order)
    if len(t_jets) != spec.K - 1:
        raise CompositionError(f"expected {spec.K - 1} t-coordinates, got {len(t_jets)}")
    out = []
    for a in range(spec.K):
        expo = jets.constant(t_jets[0].space, 0.0)
        for lam, w in enumerate(W[a]):
            if w != 0.0:
                expo = expo + t_jets[lam] * w
        out.append(jets.exp(expo))
    return out


def compose(spec: CompositionSpec) -> ImmersionChart:
    """Chart of the composition, dimension n, ambient dimension n + 1."""
    lay = layout(spec)
    factor_charts = [f.chart() for f in spec.factors]
    scale = spec.weights

    def lift(space, coords):
        coords = list(coords)
        e = weight_functions(spec, coords[: lay.K - 1])
        out = []
        for a, chart in enumerate(factor_charts):
            block = coords[lay.block(a)]
            x_a = chart.lift(space, block)
            out.extend(xi * e[a] * scale[a] for xi in x_a)
        return out

    return ImmersionChart(lay.n, lift, domain_box(spec), spec.label)


def domain_box(spec: CompositionSpec) -> np.ndarray:
    rows = [np.tile([-T_BOX, T_BOX], (spec.K - 1, 1))]
    rows += [np.asarray(f.domain, dtype=float).reshape(f.dim, 2) for f in spec.factors]
    return np.concatenate(rows, axis=0)


def factor_L1(spec: CompositionSpec) -> tuple[float, ...]:
    return tuple(float(f.L1) for f in spec.factors)


def structure_constant(spec: CompositionSpec) -> float:
    """C with L1 = -1/((n+1) C); point factors enter with L1 = -1."""
    lay = layout(spec)
    log_c = -np.log(lay.f[-1])
    for dim, c, L1 in zip(lay.dims, spec.effective_weights, factor_L1(spec)):
        if not L1 < 0:
            raise CompositionError(f"factor mean curvature must be negative, got {L1}")
        log_c += 2 * (dim + 1) * np.log(c) - (dim + 1) * np.log(dim + 1) - (dim + 2) * np.log(-L1)
    return float(np.exp(log_c / (lay.n + 2)))


def mean_curvature(spec: CompositionSpec) -> float:
    return -1.0 / ((spec.n + 1) * structure_constant(spec))


def normalization_constants(spec: CompositionSpec) -> tuple[float, float]:
    """(c, c') = ((prod c_a^{n_a+1})^{1/f_K}, prod c_a^{n_a+1})."""
    lay = layout(spec)
    log_cp = sum((d + 1) * np.log(c) for d, c in zip(lay.dims, spec.effective_weights))
    return float(np.exp(log_cp / lay.f[-1])), float(np.exp(log_cp))


@dataclass(frozen=True)
class Prediction:
    """Closed-form invariants of the composition at one chart point."""

    C: float
    L1: float
    f: tuple[int, ...]
    g: np.ndarray
    A: np.ndarray
    A_support: np.ndarray
    Gamma: np.ndarray
    H: float
    conformal: tuple[float, ...]
    normalizations: tuple[float, float]
    factor_data: tuple = field(repr=False, default=())

    @property
    def g_t_block(self) -> np.ndarray:
        k = len(self.f) - 1
        return np.diag(self.g)[:k].copy()


def _split_point(spec: CompositionSpec, point) -> tuple[np.ndarray, list[np.ndarray]]:
    lay = layout(spec)
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if point.shape != (lay.n,):
        raise CompositionError(f"composition of dimension {lay.n} evaluated at shape {point.shape}")
    return point[: lay.K - 1], [point[lay.block(a)] for a in range(lay.K)]


def predict_all(spec: CompositionSpec, point, method: str = "auto") -> Prediction:
    """Every closed-form invariant of ``compose(spec)`` at ``point``.

    Factor tensors come from :func:`factor_invariants` at each factor's own
    coordinates (recursively closed form for flat and composite factors).
    """
    lay = layout(spec)
    _, blocks = _split_point(spec, point)
    data: list[FactorData] = [factor_invariants(fac, p, method) for fac, p in zip(spec.factors, blocks)]
    K, n, f, dims = lay.K, lay.n, lay.f, lay.dims
    C = structure_constant(spec)
    fK = f[-1]

    g = np.zeros((n, n))
    A = np.zeros((n, n, n))
    support = np.zeros((n, n, n), dtype=bool)
    Gamma = np.zeros((n, n, n))

    def put_sym(i, j, k, value):
        for p in {(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)}:
            A[p] = value
            support[p] = True

    # t-block: index lam (0-based) is t^{lam+1}; f_lambda = f[lam], n_{lambda+1} = dims[lam+1]
    g_t = np.array([f[lam + 1] * C / ((dims[lam + 1] + 1) * f[lam]) for lam in range(K - 1)])
    for lam in range(K - 1):
        g[lam, lam] = g_t[lam]
        put_sym(lam, lam, lam, g_t[lam] * (1.0 / f[lam] - 1.0 / (dims[lam + 1] + 1)))
        Gamma[lam, lam, lam] = 1.0 / f[lam] - 1.0 / (dims[lam + 1] + 1)
        for mu in range(lam + 1, K - 1):
            put_sym(lam, lam, mu, g_t[lam] / f[mu])
            Gamma[lam, lam, mu] = Gamma[lam, mu, lam] = 1.0 / f[mu]
            Gamma[mu, lam, lam] = (dims[mu + 1] + 1) * f[lam + 1] / ((dims[lam + 1] + 1) * f[mu + 1] * f[lam])

    conformal = []
    for a, d in enumerate(data):
        na = dims[a]
        factor = (na + 1) * (-d.L1) * C
        conformal.append(factor)
        if na == 0:
            continue
        blk = lay.block(a)
        g_blk = factor * d.g
        g[blk, blk] = g_blk
        A[blk, blk, blk] = factor * d.A
        support[blk, blk, blk] = True
        Gamma[blk, blk, blk] = d.Gamma
        eye = np.eye(na)
        idx = np.arange(blk.start, blk.stop)
        if a >= 1:
            lam = a - 1
            value = -g_blk / (na + 1)
            _put_block_t(A, support, idx, lam, value)
            Gamma[lam][np.ix_(idx, idx)] = (na + 1) * f[a - 1] / f[a] * d.L1 * d.g
            Gamma[np.ix_(idx, [lam], idx)] = (-1.0 / (na + 1)) * eye[:, None, :]
            Gamma[np.ix_(idx, idx, [lam])] = (-1.0 / (na + 1)) * eye[:, :, None]
        for lam in range(a, K - 1):
            _put_block_t(A, support, idx, lam, g_blk / f[lam])
            Gamma[lam][np.ix_(idx, idx)] = -(na + 1) * (dims[lam + 1] + 1) / f[lam + 1] * d.L1 * d.g
            Gamma[np.ix_(idx, [lam], idx)] = (1.0 / f[lam]) * eye[:, None, :]
            Gamma[np.ix_(idx, idx, [lam])] = (1.0 / f[lam]) * eye[:, :, None]

    log_H = np.log(fK)
    for na, c, d in zip(dims, spec.effective_weights, data):
        log_H += ((na + 1) * (fK - 1) * np.log(c) + (fK + 1) / (na + 2) * np.log(d.H)
                  - (fK - na) * np.log(na + 1) - (fK - na - 1) * np.log(-d.L1))
    return Prediction(
        C=C, L1=-1.0 / (fK * C), f=f, g=g, A=A, A_support=support, Gamma=Gamma,
        H=float(np.exp(log_H)), conformal=tuple(conformal),
        normalizations=normalization_constants(spec), factor_data=tuple(data),
    )


def _put_block_t(A, support, idx, lam, value):
    """Set A[i, j, lam] and its permutations for i, j in the block ``idx``."""
    ii = np.ix_(idx, idx, [lam])
    A[ii] = value[:, :, None]
    A[np.ix_(idx, [lam], idx)] = value[:, None, :]
    A[np.ix_([lam], idx, idx)] = value[None, :, :]
    support[ii] = True
    support[np.ix_(idx, [lam], idx)] = True
    support[np.ix_([lam], idx, idx)] = True


@dataclass(frozen=True)
class MeanCurvatureVectors:
    factors: tuple[int, ...]
    closed_form: np.ndarray
    from_trace: np.ndarray | None
    pairings: np.ndarray
    predicted_pairings: np.ndarray
    route_residual: float | None


def mean_curvature_vectors(spec: CompositionSpec, point=None, g=None, A=None) -> MeanCurvatureVectors:
    """Vectors H_alpha on the t-block, one per positive-dimensional factor.

    The closed form is always returned. If the metric ``g`` and cubic form
    ``A`` of the composition at ``point`` are given (e.g. from the engine),
    H_alpha is also computed as (1/n_alpha) tr_{g_alpha} of the t-part of A,
    and the pairings are taken with that ``g``; otherwise with the predicted g.
    """
    lay = layout(spec)
    positive = tuple(a for a in range(lay.K) if lay.dims[a] > 0)
    if not positive:
        raise CompositionError("mean-curvature vectors need at least one positive-dimensional factor")
    C = structure_constant(spec)
    L1 = -1.0 / (lay.f[-1] * C)
    k = lay.K - 1
    closed = np.zeros((len(positive), k))
    for row, a in enumerate(positive):
        if a >= 1:
            closed[row, a - 1] = -lay.f[a - 1] / (lay.f[a] * C)
        for lam in range(a, k):
            closed[row, lam] = (lay.dims[lam + 1] + 1) / (lay.f[lam + 1] * C)
    traced = None
    residual = None
    if g is None or A is None:
        if point is None:
            point = np.zeros(lay.n)
        pred = predict_all(spec, point)
        g_use = pred.g if g is None else g
    else:
        g_use = g
    if g is not None and A is not None:
        g_tt_inv = np.linalg.inv(g[:k, :k])
        traced = np.zeros_like(closed)
        for row, a in enumerate(positive):
            blk = lay.block(a)
            g_blk_inv = np.linalg.inv(g[blk, blk])
            covec = np.einsum("ij,ijm->m", g_blk_inv, A[blk, blk, :k]) / lay.dims[a]
            traced[row] = g_tt_inv @ covec
        residual = float(np.abs(traced - closed).max() / np.abs(closed).max())
    g_tt = g_use[:k, :k]
    pairings = closed @ g_tt @ closed.T
    predicted = np.full((len(positive), len(positive)), L1)
    for row, a in enumerate(positive):
        predicted[row, row] = (lay.n - lay.dims[a]) / (lay.dims[a] + 1) * (-L1)
    return MeanCurvatureVectors(positive, closed, traced, pairings, predicted, residual)


def exponent_identities(n1: int, n2: int, n3: int) -> dict[str, tuple[Fraction, Fraction]]:
    """Exact exponents of each factor in both bracketings after the coordinate change.

    Returns, per factor, the pair (coefficient vector in (t1, t2) for the left
    bracketing, same for the right bracketing after substitution) as Fractions.
    """
    a, b, c = n1 + 1, n2 + 1, n3 + 1
    # left: inner t1 for x1*x2, outer t2 for (x1*x2)*x3
    left = {
        "x1": (Fraction(1, a), Fraction(1, a + b)),
        "x2": (Fraction(-1, b), Fraction(1, a + b)),
        "x3": (Fraction(0), Fraction(-1, c)),
    }
    t1p = (Fraction(-c, b + c), Fraction(b * (a + b + c), (a + b) * (b + c)))
    t2p = (Fraction(1), Fraction(a, a + b))
    # right: outer t2' for x1*(x2*x3), inner t1' for x2*x3
    def combine(w_inner: Fraction, w_outer: Fraction):
        return tuple(w_inner * p + w_outer * q for p, q in zip(t1p, t2p))

    right = {
        "x1": combine(Fraction(0), Fraction(1, a)),
        "x2": combine(Fraction(1, b), Fraction(-1, b + c)),
        "x3": combine(Fraction(-1, c), Fraction(-1, b + c)),
    }
    return {k: (left[k], right[k]) for k in left}


def associativity_change(n1: int, n2: int, n3: int) -> np.ndarray:
    """Matrix M with (t1', t2') = M (t1, t2)."""
    a, b, c = n1 + 1, n2 + 1, n3 + 1
    return np.array([[-c / (b + c), b * (a + b + c) / ((a + b) * (b + c))], [1.0, a / (a + b)]])


def is_rational_exponent_exact(spec: CompositionSpec) -> bool:
    """sum_a (n_a+1) log e_a vanishes identically (so det h is t-independent)."""
    W = weight_matrix_exact(spec)
    dims = spec.dims
    return all(sum((dims[a] + 1) * W[a][lam] for a in range(spec.K)) == 0 for lam in range(spec.K - 1))


def expand_point(spec: CompositionSpec, t: Sequence[float], blocks: Sequence[Sequence[float]]) -> np.ndarray:
    """Assemble a chart point from t and the factor coordinates."""
    parts = [np.asarray(t, dtype=float).ravel()] + [np.asarray(b, dtype=float).ravel() for b in blocks]
    point = np.concatenate(parts)
    _split_point(spec, point)
    return point
