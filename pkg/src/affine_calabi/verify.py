"""Randomized verification of the composition closed forms, the algebraic laws,
the equivalence normalizations and the parallel-cubic-form criterion.

Every check is reduced to a :class:`Check` carrying the worst absolute and
relative residual over the sample points; a report passes iff every check
does. Engine failures at a sample are recorded as failed checks rather than
raised.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import equiaffine as eq
from .calabi import (
    CompositionSpec,
    associativity_change,
    compose,
    exponent_identities,
    layout,
    mean_curvature_vectors,
    normalization_constants,
    predict_all,
    weight_matrix,
)
from .factors import Composite, Flat, Hyperboloid, Point

DEFAULT_TOL = 1e-8
ZERO_TOL = 1e-10

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"


@dataclass(frozen=True)
class Check:
    name: str
    max_abs_residual: float
    max_rel_residual: float
    tolerance: float
    status: str
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status != FAIL


@dataclass
class VerificationReport:
    spec_id: str
    checks: list[Check]
    samples: int
    seed: int | None
    runtime: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self, include_runtime: bool = False) -> dict:
        out = {
            "spec_id": self.spec_id,
            "passed": self.passed,
            "samples": self.samples,
            "seed": self.seed,
            "checks": [
                {"name": c.name, "max_abs_residual": c.max_abs_residual, "max_rel_residual": c.max_rel_residual,
                 "tolerance": c.tolerance, "status": c.status, **({"detail": c.detail} if c.detail else {})}
                for c in self.checks
            ],
        }
        if self.extras:
            out["extras"] = self.extras
        if include_runtime:
            out["runtime"] = self.runtime
        return out


class _Collector:
    """Accumulates per-sample residuals into worst-case checks."""

    def __init__(self):
        self._abs: dict[str, float] = {}
        self._rel: dict[str, float] = {}
        self._tol: dict[str, float] = {}
        self._errors: dict[str, str] = {}
        self._skipped: dict[str, str] = {}

    def add(self, name: str, abs_res: float, rel_res: float, tol: float) -> None:
        abs_res, rel_res = float(abs_res), float(rel_res)
        if not np.isfinite(rel_res):
            self._errors.setdefault(name, "non-finite residual")
        self._abs[name] = max(self._abs.get(name, 0.0), abs_res if np.isfinite(abs_res) else np.inf)
        self._rel[name] = max(self._rel.get(name, 0.0), rel_res if np.isfinite(rel_res) else np.inf)
        self._tol[name] = tol

    def error(self, name: str, message: str, tol: float) -> None:
        self._errors.setdefault(name, message)
        self._abs.setdefault(name, np.inf)
        self._rel[name] = np.inf
        self._tol[name] = tol

    def skip(self, name: str, reason: str, tol: float) -> None:
        if name not in self._rel:
            self._skipped[name] = reason
            self._tol[name] = tol

    def merge(self, other: "_Collector") -> None:
        for name in other._rel:
            self.add(name, other._abs[name], other._rel[name], other._tol[name])
        for name, msg in other._errors.items():
            self._errors.setdefault(name, msg)
        for name, reason in other._skipped.items():
            self.skip(name, reason, other._tol[name])

    def checks(self) -> list[Check]:
        out = []
        for name in sorted(set(self._rel) | set(self._skipped)):
            tol = self._tol[name]
            if name not in self._rel:
                out.append(Check(name, 0.0, 0.0, tol, SKIPPED, self._skipped[name]))
                continue
            rel = self._rel[name]
            ok = name not in self._errors and rel <= tol
            out.append(Check(name, self._abs[name], rel, tol, PASS if ok else FAIL, self._errors.get(name, "")))
        return out


def _rel(diff: float, scale: float) -> float:
    return float(diff / scale) if scale > 0 else float(diff)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("CALABI_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn: Callable, items: Sequence) -> list:
    workers = min(_workers(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def random_unimodular(rng: np.random.Generator, dim: int) -> np.ndarray:
    """A well-conditioned random matrix with determinant +1."""
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    s = np.exp(rng.uniform(-0.3, 0.3, size=dim))
    m = (q * s) @ np.linalg.qr(rng.normal(size=(dim, dim)))[0]
    d = np.linalg.det(m)
    if d < 0:
        m[0] = -m[0]
        d = -d
    return m / d ** (1.0 / dim)


# -- full composition check ---------------------------------------------------------


def _sample_checks(spec: CompositionSpec, chart: eq.ImmersionChart, u: np.ndarray, tol: float) -> _Collector:
    col = _Collector()
    try:
        inv = eq.invariants(chart, u)
    except (eq.EquiaffineError, np.linalg.LinAlgError) as exc:
        col.error("engine", f"{type(exc).__name__}: {exc}", tol)
        return col
    col.add("engine", 0.0, 0.0, tol)
    pred = predict_all(spec, u)
    g, A = inv.frame.g, inv.A
    g_scale = np.abs(pred.g).max()
    a_scale = max(np.abs(pred.A).max(), g_scale)

    diff = abs(inv.L1 - pred.L1)
    col.add("mean_curvature", diff, _rel(diff, abs(pred.L1)), tol)
    spread = float(np.ptp(inv.eigenvalues))
    col.add("sphere_eigen_spread", spread, _rel(spread, abs(pred.L1)), tol)
    center = np.linalg.norm(inv.xi + inv.L1 * inv.position)
    col.add("sphere_center", center, _rel(center, np.linalg.norm(inv.xi)), tol)

    diff = np.abs(g - pred.g).max()
    col.add("metric", diff, _rel(diff, g_scale), tol)
    off = np.abs(g[pred.g == 0.0]).max(initial=0.0)
    col.add("metric_block_orthogonality", off, _rel(off, g_scale), ZERO_TOL)
    diff = np.abs(A - pred.A).max()
    col.add("fubini_pick", diff, _rel(diff, a_scale), tol)
    off = np.abs(A[~pred.A_support]).max(initial=0.0)
    col.add("fubini_pick_support", off, _rel(off, np.abs(A).max()), ZERO_TOL)
    diff = np.abs(inv.Gamma - pred.Gamma).max()
    col.add("christoffel", diff, _rel(diff, max(1.0, np.abs(pred.Gamma).max())), tol)
    diff = abs(inv.frame.H - pred.H)
    col.add("volume_H", diff, _rel(diff, pred.H), tol)

    col.add("route_agreement", inv.route_mismatch, inv.route_mismatch, eq.ROUTE_TOLERANCE)
    for name, fn in (("apolarity", eq.apolarity_residual), ("trace_identity", eq.trace_identity_residual),
                     ("codazzi", eq.codazzi_residual)):
        r = fn(inv)
        col.add(name, r, r, tol)
    r = eq.gauss_residual(inv, sphere=True)
    col.add("gauss_sphere", r, r, tol)

    if spec.s:
        m = mean_curvature_vectors(spec, u, g, A)
        col.add("mean_curvature_vectors", m.route_residual, m.route_residual, tol)
        diff = np.abs(m.pairings - m.predicted_pairings).max()
        col.add("mean_curvature_pairings", diff, _rel(diff, abs(pred.L1)), tol)
    else:
        col.skip("mean_curvature_vectors", "no positive-dimensional factor", tol)
        col.skip("mean_curvature_pairings", "no positive-dimensional factor", tol)
    return col


def verify_spec(spec: CompositionSpec, n_samples: int = 10, tol: float = DEFAULT_TOL, seed: int = 42,
                ambient_map: np.ndarray | None = None) -> VerificationReport:
    """Engine invariants of ``compose(spec)`` against every closed form, at random points.

    With ``ambient_map`` (a unimodular matrix) the engine runs on the
    transformed chart while predictions stay the same, which exercises
    equiaffine invariance.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    start = time.perf_counter()
    chart = compose(spec)
    if ambient_map is not None:
        chart = eq.transformed_chart(chart, ambient_map)
    rng = np.random.default_rng(seed)
    points = compose(spec).sample(rng, n_samples)
    col = _Collector()
    for part in _map(lambda u: _sample_checks(spec, chart, u, tol), list(points)):
        col.merge(part)
    try:
        verdict = eq.classify_sphere(chart, points if n_samples >= 3 else compose(spec).sample(rng, 3), tol)
        diff = abs(verdict.L1 - predict_all(spec, points[0]).L1)
        col.add("sphere_certified", 0.0 if verdict.is_hyperbolic else 1.0, 0.0 if verdict.is_hyperbolic else 1.0, 0.5)
        col.add("sphere_certified_L1", diff, _rel(diff, abs(verdict.L1)), tol)
    except eq.EquiaffineError as exc:
        col.error("sphere_certified", str(exc), 0.5)
    report = VerificationReport(spec.label, col.checks(), n_samples, seed)
    report.runtime = time.perf_counter() - start
    return report


# -- laws -------------------------------------------------------------------------------


def _unit(spec_factors: Iterable) -> CompositionSpec:
    return CompositionSpec(tuple(spec_factors))


def _factor_sample(f, rng: np.random.Generator) -> np.ndarray:
    box = np.asarray(f.domain, dtype=float).reshape(f.dim, 2)
    return rng.uniform(box[:, 0], box[:, 1]) if f.dim else np.zeros(0)


def _pointwise(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    diff = float(np.abs(a - b).max())
    return diff, _rel(diff, float(np.abs(a).max()))


def verify_commutativity(f1, f2, tol: float = 1e-12, n_samples: int = 10, seed: int = 42) -> VerificationReport:
    """x2*x1 at (t, p2, p1) equals the block swap of x1*x2 at (-t, p1, p2)."""
    n1, n2 = f1.dim, f2.dim
    x12 = compose(_unit((f1, f2)))
    x21 = compose(_unit((f2, f1)))
    swap = np.zeros((n1 + n2 + 2, n1 + n2 + 2))
    swap[: n2 + 1, n1 + 1:] = np.eye(n2 + 1)
    swap[n2 + 1:, : n1 + 1] = np.eye(n1 + 1)
    rng = np.random.default_rng(seed)
    col = _Collector()
    for _ in range(n_samples):
        t = rng.uniform(-0.5, 0.5)
        p1, p2 = _factor_sample(f1, rng), _factor_sample(f2, rng)
        lhs = x21.position(np.concatenate([[t], p2, p1]))
        rhs = swap @ x12.position(np.concatenate([[-t], p1, p2]))
        col.add("commutativity_pointwise", *_pointwise(lhs, rhs), tol)
    expected = (-1) ** ((n1 + 1) * (n2 + 1))
    diff = abs(np.linalg.det(swap) - expected)
    col.add("commutativity_determinant", diff, diff, tol)
    report = VerificationReport(f"comm({_unit((f1, f2)).label})", col.checks(), n_samples, seed)
    report.extras = {"determinant": float(expected)}
    return report


def verify_associativity(f1, f2, f3, tol: float = 1e-12, n_samples: int = 10, seed: int = 42) -> VerificationReport:
    """(x1*x2)*x3 and x1*(x2*x3) agree pointwise after the explicit t-change."""
    n1, n2, n3 = f1.dim, f2.dim, f3.dim
    left = compose(_unit((Composite(_unit((f1, f2))), f3)))
    right = compose(_unit((f1, Composite(_unit((f2, f3))))))
    change = associativity_change(n1, n2, n3)
    rng = np.random.default_rng(seed)
    col = _Collector()
    for _ in range(n_samples):
        t = rng.uniform(-0.5, 0.5, size=2)
        p1, p2, p3 = (_factor_sample(f, rng) for f in (f1, f2, f3))
        tp = change @ t
        lhs = left.position(np.concatenate([[t[1], t[0]], p1, p2, p3]))
        rhs = right.position(np.concatenate([[tp[1]], p1, [tp[0]], p2, p3]))
        col.add("associativity_pointwise", *_pointwise(lhs, rhs), tol)
    bad = [k for k, (lhs, rhs) in exponent_identities(n1, n2, n3).items() if lhs != rhs]
    col.add("associativity_exponents_exact", float(len(bad)), float(len(bad)), 0.5)
    return VerificationReport(f"assoc({_unit((f1, f2, f3)).label})", col.checks(), n_samples, seed)


def _normalized(spec: CompositionSpec, weights: Sequence[float]) -> CompositionSpec:
    factors = tuple(Point() if isinstance(f, Point) else f for f in spec.factors)
    return CompositionSpec(factors, tuple(weights))


@dataclass(frozen=True)
class Witness:
    shift: np.ndarray
    block_scales: np.ndarray
    matrix: np.ndarray
    lstsq_residual: float

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))


def equivalence_witness(spec: CompositionSpec, other: CompositionSpec) -> Witness:
    """Shift delta and block-diagonal T with x_spec(t, p) = T x_other(t + delta, p).

    delta solves log e_a(delta) = log(c_a / c'_a) in the least-squares sense;
    the remaining mismatch is absorbed by T.
    """
    lay = layout(spec)
    W = weight_matrix(spec)
    target = np.log(np.asarray(spec.effective_weights) / np.asarray(other.effective_weights))
    shift, *_ = np.linalg.lstsq(W, target, rcond=None)
    resid = float(np.abs(W @ shift - target).max())
    scales = np.exp(target - W @ shift)
    diag = np.concatenate([np.full(d + 1, s) for d, s in zip(lay.dims, scales)])
    return Witness(shift, scales, np.diag(diag), resid)


def verify_equivalence_triple(spec: CompositionSpec, tol: float = 1e-10, n_samples: int = 10,
                              seed: int = 42) -> VerificationReport:
    """x, c*(e_1 x_1, ...) and (e_1 x_1, ..., c' e_K x_K) related by explicit witnesses.

    The tilde variant with the printed c' = prod c_a^(n_a+1) is equivalent to x
    only when the last factor is a point (or c' = 1); the corrected constant
    c'^(1/(n_K+1)) is checked as well.
    """
    c, cp = normalization_constants(spec)
    K = spec.K
    # The printed c' makes det T = c'^(-n_K); the exponent 1/(n_K+1) is what makes the
    # last-factor rescaling unimodular, so both variants are reported side by side.
    cp_corrected = cp ** (1.0 / (spec.dims[-1] + 1))
    variants = {
        "bar": _normalized(spec, (c,) * K),
        "tilde": _normalized(spec, (1.0,) * (K - 1) + (cp,)),
        "tilde_corrected": _normalized(spec, (1.0,) * (K - 1) + (cp_corrected,)),
    }
    x = compose(spec)
    rng = np.random.default_rng(seed)
    points = x.sample(rng, n_samples)
    col = _Collector()
    extras = {"c": c, "c_prime": cp, "c_prime_corrected": cp_corrected}
    for tag, other in variants.items():
        w = equivalence_witness(spec, other)
        y = compose(other)
        det_diff = abs(w.determinant - 1.0)
        col.add(f"equivalence_{tag}_determinant", det_diff, det_diff, tol)
        extras[f"{tag}_shift"] = [float(v) for v in w.shift]
        extras[f"{tag}_determinant"] = w.determinant
        L1x = -1.0 / ((spec.n + 1) * _structure(spec))
        L1y = -1.0 / ((spec.n + 1) * _structure(other))
        col.add(f"equivalence_{tag}_mean_curvature", abs(L1x - L1y), _rel(abs(L1x - L1y), abs(L1x)), tol)
        for u in points:
            v = u.copy()
            v[: K - 1] += w.shift
            col.add(f"equivalence_{tag}_pointwise", *_pointwise(x.position(u), w.matrix @ y.position(v)), tol)
            try:
                ix, iy = eq.invariants(x, u), eq.invariants(y, v)
            except eq.EquiaffineError as exc:
                col.error(f"equivalence_{tag}_invariants", str(exc), tol)
                continue
            scale = max(np.abs(ix.frame.g).max(), np.abs(ix.A).max())
            diff = max(np.abs(ix.frame.g - iy.frame.g).max(), np.abs(ix.A - iy.A).max())
            col.add(f"equivalence_{tag}_invariants", diff, _rel(diff, scale), tol)
    report = VerificationReport(f"equiv({spec.label})", col.checks(), n_samples, seed)
    report.extras = extras
    return report


def _structure(spec: CompositionSpec) -> float:
    from .calabi import structure_constant

    return structure_constant(spec)


# -- identities and parallel cubic form ---------------------------------------------------


def verify_identities(chart: eq.ImmersionChart, n_samples: int = 10, tol: float = DEFAULT_TOL,
                      seed: int = 42, samples: np.ndarray | None = None) -> VerificationReport:
    """Apolarity, trace identity, Codazzi and Gauss equations at random points of ``chart``."""
    rng = np.random.default_rng(seed)
    points = np.asarray(samples, dtype=float) if samples is not None else chart.sample(rng, max(n_samples, 3))
    col = _Collector()
    invs = []
    for u in points:
        try:
            inv = eq.invariants(chart, u)
        except eq.EquiaffineError as exc:
            col.error("engine", f"{type(exc).__name__}: {exc}", tol)
            continue
        invs.append(inv)
        col.add("route_agreement", inv.route_mismatch, inv.route_mismatch, eq.ROUTE_TOLERANCE)
        for name, fn in (("apolarity", eq.apolarity_residual), ("trace_identity", eq.trace_identity_residual),
                         ("codazzi", eq.codazzi_residual), ("gauss", eq.gauss_residual)):
            r = fn(inv)
            col.add(name, r, r, tol)
    if len(invs) == len(points) and len(points) >= 3:
        verdict = eq.classify_sphere(chart, points, tol)
        if verdict.is_proper_sphere:
            for inv in invs:
                r = eq.gauss_residual(inv, sphere=True)
                col.add("gauss_sphere", r, r, tol)
        else:
            col.skip("gauss_sphere", "chart is not a proper affine sphere", tol)
    else:
        col.skip("gauss_sphere", "engine failed at some samples", tol)
    return VerificationReport(chart.name or "chart", col.checks(), len(points), seed)


def cubic_form_parallelism(chart: eq.ImmersionChart, points: np.ndarray) -> float:
    """max over points of |nabla A| / max(|A|, |g|)."""
    worst = 0.0
    for u in points:
        inv = eq.invariants(chart, u)
        scale = max(np.abs(inv.A).max(), np.abs(inv.frame.g).max())
        worst = max(worst, float(np.abs(inv.nablaA).max() / scale))
    return worst


def verify_parallel(spec: CompositionSpec, tol: float = DEFAULT_TOL, n_samples: int = 5,
                    seed: int = 42) -> VerificationReport:
    """The composition has parallel cubic form iff every positive-dimensional factor does."""
    rng = np.random.default_rng(seed)
    chart = compose(spec)
    comp_norm = cubic_form_parallelism(chart, chart.sample(rng, n_samples))
    factor_norms = {}
    for idx, f in enumerate(spec.factors):
        if f.dim == 0:
            continue
        fc = f.chart()
        factor_norms[f"factor_{idx}"] = cubic_form_parallelism(fc, fc.sample(rng, n_samples))
    comp_parallel = comp_norm <= tol
    factors_parallel = all(v <= tol for v in factor_norms.values())
    col = _Collector()
    mismatch = float(comp_parallel != factors_parallel)
    col.add("parallel_iff", mismatch, mismatch, 0.5)
    report = VerificationReport(f"parallel({spec.label})", col.checks(), n_samples, seed)
    report.extras = {"composition_norm": comp_norm, "composition_parallel": bool(comp_parallel),
                     "factor_norms": factor_norms, "factors_parallel": bool(factors_parallel)}
    return report


# -- random specs ----------------------------------------------------------------------------


def _random_base_factor(rng: np.random.Generator):
    kind = rng.integers(3)
    if kind == 0:
        return Point()
    if kind == 1:
        return Flat(int(rng.integers(1, 4)), float(rng.uniform(0.5, 3.0)))
    return Hyperboloid(int(rng.integers(1, 3)))


def random_spec(rng: np.random.Generator, max_dim: int = 8, composite_prob: float = 0.2) -> CompositionSpec:
    """A random spec: K in 2..4, catalog factors, one nesting level, weights in [0.5, 3].

    Total dimension is capped at ``max_dim`` by rejection to bound runtime.
    """
    while True:
        K = int(rng.integers(2, 5))
        factors = []
        for _ in range(K):
            if rng.random() < composite_prob:
                inner = CompositionSpec((_random_base_factor(rng), _random_base_factor(rng)),
                                        tuple(rng.uniform(0.5, 3.0, size=2)))
                factors.append(Composite(inner))
            else:
                factors.append(_random_base_factor(rng))
        spec = CompositionSpec(tuple(factors), tuple(rng.uniform(0.5, 3.0, size=K)))
        if spec.n <= max_dim:
            return spec
