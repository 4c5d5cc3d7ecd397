"""Factor hyperspheres that can be fed into a Calabi composition.

Four kinds are available:

* :class:`Point` is a positive number seen as a 0-dimensional hyperbolic
  sphere with mean curvature -1.
* :class:`Flat` is the hypersurface x^1 ... x^{n0+1} = C0, parametrized as the
  composition of n0+1 points so its closed forms hold in chart coordinates.
* :class:`Hyperboloid` is the upper sheet of a quadric, rescaled so its
  certified affine mean curvature is -1.
* :class:`Composite` wraps another composition.

Every factor exposes ``dim``, ``L1``, ``chart()`` and ``domain``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Union

import numpy as np
import scipy.optimize

from . import jets
from .equiaffine import ImmersionChart, classify_sphere, invariants

if TYPE_CHECKING:  # pragma: no cover
    from .calabi import CompositionSpec

T_BOX = 0.5
HYPERBOLOID_BOX = 1.0
CERTIFY_SAMPLES = 20
CERTIFY_TOL = 1e-9


class FactorError(ValueError):
    pass


@dataclass(frozen=True)
class Point:
    """A 0-dimensional factor with value ``c``."""

    c: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise FactorError(f"point value must be positive, got {self.c}")

    dim = 0
    L1 = -1.0

    @property
    def domain(self) -> np.ndarray:
        return np.zeros((0, 2))

    def chart(self) -> ImmersionChart:
        c = float(self.c)
        return ImmersionChart(0, lambda space, coords: [jets.constant(space, c)], self.domain, f"point({c:g})")


@dataclass(frozen=True)
class Flat:
    """The flat hyperbolic sphere x^1 ... x^{n0+1} = C0 in exponential coordinates."""

    n0: int
    C0: float = 1.0

    def __post_init__(self):
        if int(self.n0) != self.n0 or self.n0 < 1:
            raise FactorError(f"flat factor needs an integer n0 >= 1, got {self.n0}")
        if not (np.isfinite(self.C0) and self.C0 > 0):
            raise FactorError(f"flat factor needs C0 > 0, got {self.C0}")

    @property
    def dim(self) -> int:
        return int(self.n0)

    @property
    def inner(self) -> "CompositionSpec":
        from .calabi import CompositionSpec

        points = tuple(Point() for _ in range(self.n0 + 1))
        weights = (1.0,) * self.n0 + (float(self.C0),)
        return CompositionSpec(points, weights)

    @property
    def L1(self) -> float:
        return flat_closed_forms(self.n0, self.C0)["L1"]

    @property
    def domain(self) -> np.ndarray:
        return np.tile([-T_BOX, T_BOX], (self.dim, 1))

    def chart(self) -> ImmersionChart:
        from .calabi import compose

        chart = compose(self.inner)
        return ImmersionChart(chart.dim, chart.lift, self.domain, f"flat({self.n0},{self.C0:g})")


@dataclass(frozen=True)
class Hyperboloid:
    """mu * (u, sqrt(1 + |u|^2)) with mu fixed so the certified L1 is -1."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise FactorError(f"hyperboloid needs an integer n >= 1, got {self.n}")

    @property
    def dim(self) -> int:
        return int(self.n)

    @property
    def scale(self) -> float:
        return _hyperboloid_certificate(self.dim)[0]

    @property
    def L1(self) -> float:
        return _hyperboloid_certificate(self.dim)[1]

    @property
    def domain(self) -> np.ndarray:
        return np.tile([-HYPERBOLOID_BOX, HYPERBOLOID_BOX], (self.dim, 1))

    def chart(self) -> ImmersionChart:
        return _hyperboloid_chart(self.dim, self.scale, self.domain)


@dataclass(frozen=True)
class Composite:
    """A composition used as a single factor."""

    inner: "CompositionSpec"

    @property
    def dim(self) -> int:
        return self.inner.n

    @property
    def L1(self) -> float:
        from .calabi import structure_constant

        return -1.0 / ((self.inner.n + 1) * structure_constant(self.inner))

    @property
    def domain(self) -> np.ndarray:
        from .calabi import domain_box

        return domain_box(self.inner)

    def chart(self) -> ImmersionChart:
        from .calabi import compose

        return compose(self.inner)


FactorSpec = Union[Point, Flat, Hyperboloid, Composite]


def make_point_factor(c: float = 1.0) -> Point:
    return Point(float(c))


def make_flat_factor(n0: int, C0: float = 1.0) -> Flat:
    return Flat(int(n0), float(C0))


def make_hyperboloid_factor(n: int) -> Hyperboloid:
    h = Hyperboloid(int(n))
    h.L1  # certify eagerly so failures surface at construction
    return h


def make_composite_factor(inner: "CompositionSpec") -> Composite:
    return Composite(inner)


def _hyperboloid_chart(n: int, mu: float, domain=None) -> ImmersionChart:
    def lift(space, coords):
        r2 = 1.0
        for c in coords:
            r2 = r2 + c * c
        return [c * mu for c in coords] + [jets.sqrt(r2) * mu]

    return ImmersionChart(n, lift, domain, f"hyperboloid({n})")


@lru_cache(maxsize=None)
def _hyperboloid_certificate(n: int) -> tuple[float, float]:
    """Scale mu with engine L1 = -1 at u = 0, and the L1 certified on samples."""

    def residual(log_mu: float) -> float:
        chart = _hyperboloid_chart(n, float(np.exp(log_mu)))
        return invariants(chart, np.zeros(n)).L1 + 1.0

    log_mu = scipy.optimize.brentq(residual, -3.0, 3.0, xtol=1e-15, rtol=1e-15)
    mu = float(np.exp(log_mu))
    chart = _hyperboloid_chart(n, mu)
    rng = np.random.default_rng(20_000 + n)
    samples = rng.uniform(-HYPERBOLOID_BOX, HYPERBOLOID_BOX, size=(CERTIFY_SAMPLES, n))
    verdict = classify_sphere(chart, samples, CERTIFY_TOL)
    if not verdict.is_hyperbolic:
        raise FactorError(f"hyperboloid of dimension {n} failed certification: {verdict}")
    return mu, verdict.L1


def flat_closed_forms(n0: int, C0: float) -> dict:
    """Metric, mean curvature, cubic form and Pick invariant of the flat sphere.

    Coordinates are the exponential ones used by :class:`Flat`; all values are
    constant in those coordinates.
    """
    n0 = int(n0)
    base = (C0**2 / (n0 + 1)) ** (1.0 / (n0 + 2))
    lam = np.arange(1, n0 + 1, dtype=float)
    g = np.diag((lam + 1) / lam) * base
    L1 = -((n0 + 1) ** (-(n0 + 1) / (n0 + 2))) * C0 ** (-2.0 / (n0 + 2))
    A = np.zeros((n0, n0, n0))
    for a in range(n0):
        la = a + 1
        A[a, a, a] = -(la**2 - 1) / la**2 * base
        for b in range(a + 1, n0):
            value = (la + 1) / (la * (b + 1)) * base
            A[a, a, b] = A[a, b, a] = A[b, a, a] = value
    J = None
    if n0 >= 2:
        g_inv = np.linalg.inv(g)
        J = float(np.einsum("ia,jb,kc,ijk,abc->", g_inv, g_inv, g_inv, A, A) / (n0 * (n0 - 1)))
    return {"g": g, "L1": float(L1), "A": A, "J": J, "C": base}


@dataclass(frozen=True)
class FactorData:
    """Invariants of one factor at one point of its chart."""

    L1: float
    g: np.ndarray
    A: np.ndarray
    Gamma: np.ndarray
    H: float
    source: str


def factor_invariants(f: FactorSpec, u=(), method: str = "auto") -> FactorData:
    """Invariants of ``f`` at ``u``; closed forms where available unless ``method='engine'``."""
    if method not in ("auto", "engine"):
        raise ValueError(f"unknown method {method!r}")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (f.dim,):
        raise FactorError(f"factor of dimension {f.dim} evaluated at {u.shape}")
    if isinstance(f, Point):
        return FactorData(-1.0, np.zeros((0, 0)), np.zeros((0, 0, 0)), np.zeros((0, 0, 0)), 1.0, "closed")
    if method == "auto" and isinstance(f, (Flat, Composite)):
        from .calabi import predict_all

        p = predict_all(f.inner, u)
        return FactorData(p.L1, p.g, p.A, p.Gamma, p.H, "closed")
    inv = invariants(f.chart(), u)
    return FactorData(f.L1, inv.frame.g, inv.A, inv.Gamma, inv.frame.H, "engine")
