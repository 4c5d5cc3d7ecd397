"""Equiaffine invariants of a nondegenerate hypersurface chart, from jets alone.

Everything is computed in the coordinate frame ``{x_,1, ..., x_,n}`` of an
:class:`ImmersionChart`. The pipeline at a point u is

    x (order 4) -> h_ij = det(x_,1..x_,n, x_,ij), H, g    (order 2)
               -> Levi-Civita symbols, affine normal xi  (order 1)
               -> induced connection Gamma, cubic form A (order 1)
               -> shape operator B, curvature R, covariant derivative of A (order 0)

Index conventions (all arrays are plain numpy, 0-based):

* ``Gamma[k, i, j]``  = Gamma^k_ij, from x_,ij = Gamma^k_ij x_,k + g_ij xi
* ``Gamma_LC[k, i, j]`` = Levi-Civita symbols of g
* ``A[i, j, k]``      = g_kl (Gamma^l_ij - Gamma_LC^l_ij), fully symmetric
* ``B[i, j]``         = g(B(d_i), d_j); ``shape_operator[k, i]`` = B^k_i with d_i xi = -B^k_i x_,k
* ``R[l, i, j, k]``   = dx^l(R(d_j, d_k) d_i), R(X,Y) = [nabla_X, nabla_Y] - nabla_[X,Y]
* ``nablaA[i, j, k, l]`` = A_ijk,l (Levi-Civita covariant derivative in direction l)
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import jets
from .jets import Jet, JetSpace

DEGENERACY_THRESHOLD = 1e-12
SINGULAR_FRAME_COND = 1e12
ROUTE_TOLERANCE = 1e-9
NORMAL_TOLERANCE = 1e-8


class EquiaffineError(ArithmeticError):
    """Base class for failures of the invariant pipeline."""


class DegenerateError(EquiaffineError):
    pass


class SingularFrameError(EquiaffineError):
    pass


class NonTangentialError(EquiaffineError):
    pass


class RouteMismatchError(EquiaffineError):
    pass


class UndefinedError(EquiaffineError):
    pass


class IndefiniteWarning(UserWarning):
    pass


Lift = Callable[[JetSpace, Sequence[Jet]], Sequence[Jet]]


@dataclass(frozen=True)
class ImmersionChart:
    """A chart u -> x(u) in R^{dim+1}.

    ``lift`` maps coordinate jets (all in one :class:`JetSpace`) to the
    ``dim + 1`` ambient coordinate jets, so charts compose like functions of
    dual numbers. ``domain`` is an optional ``(dim, 2)`` box of valid u.
    """

    dim: int
    lift: Lift
    domain: np.ndarray | None = None
    name: str = ""

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1

    def eval(self, u: Sequence[float], order: int = 4) -> list[Jet]:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.dim,):
            raise ValueError(f"{self.name or 'chart'} expects {self.dim} coordinates, got {u.shape}")
        coords = jets.seed_point(u, order)
        space = jets.jet_space(self.dim, order)
        out = list(self.lift(space, coords))
        if len(out) != self.ambient_dim:
            raise ValueError(f"lift returned {len(out)} coordinates, expected {self.ambient_dim}")
        for j in out:
            if j.space is not space:
                raise ValueError("lift returned jets outside the requested space")
        return out

    def position(self, u: Sequence[float]) -> np.ndarray:
        return np.array([j.value for j in self.eval(u, 0)])

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        box = self.domain if self.domain is not None else np.tile([-0.5, 0.5], (self.dim, 1))
        box = np.asarray(box, dtype=float).reshape(self.dim, 2)
        return rng.uniform(box[:, 0], box[:, 1], size=(count, self.dim))


def transformed_chart(chart: ImmersionChart, matrix: np.ndarray) -> ImmersionChart:
    """The chart of ``matrix @ x``."""
    matrix = np.asarray(matrix, dtype=float)

    def lift(space, coords):
        x = jets.stack(list(chart.lift(space, coords)))
        y = jets.einsum("ab,b->a", matrix, x)
        return list(y)

    return ImmersionChart(chart.dim, lift, chart.domain, f"T({chart.name})")


def graph_chart(fn: Callable[[Sequence[Jet]], Jet], dim: int, domain=None, name="graph") -> ImmersionChart:
    """Chart of the graph u -> (u, fn(u))."""

    def lift(space, coords):
        return list(coords) + [fn(coords)]

    return ImmersionChart(dim, lift, None if domain is None else np.asarray(domain, float), name)


@dataclass(frozen=True)
class MetricFrame:
    h: np.ndarray
    H: float
    g: np.ndarray
    g_inv: np.ndarray
    sqrt_detG: float
    sign_flip: int
    indefinite: bool = False


@dataclass(frozen=True)
class InvariantSet:
    position: np.ndarray
    xi: np.ndarray
    Gamma: np.ndarray
    Gamma_LC: np.ndarray
    A: np.ndarray
    B: np.ndarray
    shape_operator: np.ndarray
    eigenvalues: np.ndarray
    L1: float
    J: float | None
    R: np.ndarray
    nablaA: np.ndarray
    frame: MetricFrame
    # route-2 cubic form and diagnostics
    A_route2: np.ndarray = field(repr=False)
    route_mismatch: float = 0.0
    normal_defect: float = 0.0

    @property
    def dim(self) -> int:
        return self.A.shape[0]


class _Local:
    """Lazily evaluated geometry of a chart at one point."""

    def __init__(self, chart: ImmersionChart, u: Sequence[float]):
        if chart.dim < 1:
            raise ValueError("equiaffine invariants need dim >= 1")
        self.chart = chart
        self.n = chart.dim
        self.u = np.atleast_1d(np.asarray(u, dtype=float))
        self.x = jets.stack(chart.eval(self.u, 4))

    @cached_property
    def tangent(self) -> Jet:
        """x_,i as columns, shape (n+1, n), order 3."""
        return jets.stack([self.x.diff(i) for i in range(self.n)], axis=1)

    @cached_property
    def hessian(self) -> Jet:
        """x_,ij, shape (n+1, n, n), order 2."""
        t = self.tangent
        rows = [jets.stack([t[:, i].diff(j) for j in range(self.n)], axis=1) for i in range(self.n)]
        hess = jets.stack(rows, axis=1)
        return 0.5 * (hess + hess.transpose(0, 2, 1))

    @cached_property
    def metric_jets(self) -> dict:
        n = self.n
        t2 = self.tangent.truncate(2)
        t0 = t2.value
        u_svd, s, _ = np.linalg.svd(t0)
        if s[-1] <= DEGENERACY_THRESHOLD * s[0]:
            raise DegenerateError(f"chart Jacobian has rank < {n} at u={self.u}")
        # det(x_1..x_n, v) = det(F) (F^{-1} v)_n for F = [x_1..x_n | z], z any transversal
        z = jets.constant(t2.space, u_svd[:, -1])
        frame = jets.concatenate([t2, z.reshape(n + 1, 1)], axis=1)
        normal_covector = jets.det(frame) * jets.inv(frame)[n]
        h = jets.sym(jets.einsum("a,aij->ij", normal_covector, self.hessian))
        h0 = h.value
        # Hadamard ratio |det h| / prod |row_i h| lies in [0, 1] and is scale free
        det_h0 = np.linalg.det(h0)
        hadamard = np.prod(np.linalg.norm(h0, axis=1))
        if not hadamard > 0 or abs(det_h0) <= DEGENERACY_THRESHOLD * hadamard:
            raise DegenerateError(f"|det h| = {abs(det_h0):.3e} is degenerate at u={self.u}")
        eig = np.linalg.eigvalsh(h0)
        indefinite = False
        if np.all(eig > 0):
            sign_flip = 1
        elif np.all(eig < 0):
            sign_flip = -1
        else:
            sign_flip = 1
            indefinite = True
            warnings.warn(f"h is indefinite at u={self.u}", IndefiniteWarning, stacklevel=3)
        hs = h * float(sign_flip)
        det_hs = jets.det(hs)
        H = det_hs * float(np.sign(det_hs.value))
        g = jets.sym(hs * H ** (-1.0 / (n + 2)))
        g_inv = jets.sym(jets.inv(g))
        det_g = jets.det(g)
        sqrt_G = jets.sqrt(det_g * float(np.sign(det_g.value)))
        return {"h": h, "hs": hs, "H": H, "g": g, "g_inv": g_inv, "sqrt_G": sqrt_G,
                "sign_flip": sign_flip, "indefinite": indefinite}

    @cached_property
    def frame(self) -> MetricFrame:
        m = self.metric_jets
        return MetricFrame(h=m["h"].value, H=m["H"].value, g=m["g"].value, g_inv=m["g_inv"].value,
                           sqrt_detG=m["sqrt_G"].value, sign_flip=m["sign_flip"],
                           indefinite=m["indefinite"])

    @cached_property
    def christoffel_lc(self) -> Jet:
        """Levi-Civita symbols [l, i, j], order 1."""
        m = self.metric_jets
        dg = jets.stack([m["g"].diff(k) for k in range(self.n)], axis=2)  # dg[i,j,k] = d_k g_ij
        first = 0.5 * (dg.transpose(0, 2, 1) + dg - dg.transpose(2, 0, 1))  # [m,i,j]
        return jets.einsum("lm,mij->lij", m["g_inv"].truncate(1), first)

    @cached_property
    def xi(self) -> Jet:
        """Affine normal (1/n) Laplacian_g x in divergence form, order 1."""
        m = self.metric_jets
        flux = m["sqrt_G"] * jets.einsum("ij,aj->ia", m["g_inv"], self.tangent.truncate(2))
        div = flux[0].diff(0)
        for i in range(1, self.n):
            div = div + flux[i].diff(i)
        return div / (m["sqrt_G"].truncate(1) * float(self.n))

    @cached_property
    def transversal_frame(self) -> Jet:
        t1 = self.tangent.truncate(1)
        e = jets.concatenate([t1, self.xi.reshape(self.n + 1, 1)], axis=1)
        cond = np.linalg.cond(e.value)
        if not np.isfinite(cond) or cond > SINGULAR_FRAME_COND:
            raise SingularFrameError(f"frame {{x_,i, xi}} is singular (cond={cond:.2e}) at u={self.u}")
        return e

    @cached_property
    def gauss_split(self) -> tuple[Jet, Jet]:
        """Solve x_,ij = Gamma^k_ij x_,k + c_ij xi; returns (Gamma, c), order 1."""
        y = jets.solve(self.transversal_frame, self.hessian.truncate(1))
        return y[: self.n], y[self.n]

    @cached_property
    def cubic_form_jet(self) -> Jet:
        gamma, _ = self.gauss_split
        raw = jets.einsum("kl,lij->ijk", self.metric_jets["g"].truncate(1), gamma - self.christoffel_lc)
        return raw

    @cached_property
    def cubic_form(self) -> tuple[np.ndarray, np.ndarray, float]:
        """(A symmetrized, A via the h_ijk route, relative mismatch)."""
        n = self.n
        raw = self.cubic_form_jet.value
        a1 = _symmetrize3(raw)
        m = self.metric_jets
        hs, H = m["hs"], m["H"]
        dhs = np.stack([hs.diff(k).value for k in range(n)], axis=2)
        dlogH = np.array([H.diff(k).value for k in range(n)]) / H.value
        gamma0 = self.gauss_split[0].value
        hs0 = hs.value
        hijk = (dhs - np.einsum("k,ij->ijk", dlogH, hs0) / (n + 2)
                - np.einsum("lj,lik->ijk", hs0, gamma0) - np.einsum("il,ljk->ijk", hs0, gamma0))
        a2 = -0.5 * H.value ** (-1.0 / (n + 2)) * hijk
        scale = max(np.abs(a1).max(), np.abs(m["g"].value).max())
        mismatch = max(np.abs(raw - a2).max(), np.abs(a1 - a2).max()) / scale
        if mismatch > ROUTE_TOLERANCE:
            raise RouteMismatchError(f"cubic-form routes disagree by {mismatch:.2e} at u={self.u}")
        return a1, a2, mismatch

    @cached_property
    def shape(self) -> dict:
        n = self.n
        d_xi = np.stack([self.xi.diff(i).value for i in range(n)], axis=1)  # (n+1, n)
        e0 = self.transversal_frame.value
        y = np.linalg.solve(e0, d_xi)
        bmix = -y[:n]
        normal_part = np.abs(y[n]).max()
        xi0 = self.xi.value
        scale = max(np.abs(bmix).max(), np.linalg.norm(d_xi) / np.linalg.norm(xi0), 1.0)
        if normal_part > NORMAL_TOLERANCE * scale:
            raise NonTangentialError(f"d xi has a normal component {normal_part:.2e} at u={self.u}")
        g0 = self.frame.g
        b_low = g0 @ bmix
        b_low = 0.5 * (b_low + b_low.T)
        if self.frame.indefinite:
            eig = np.sort(np.linalg.eigvals(bmix).real)
        else:
            eig = scipy.linalg.eigh(b_low, g0, eigvals_only=True)
        return {"B": b_low, "mixed": bmix, "eigenvalues": eig, "L1": float(np.trace(bmix) / n)}

    @cached_property
    def nabla_a(self) -> np.ndarray:
        n = self.n
        sym_jet = _symmetrize3_jet(self.cubic_form_jet)
        da = np.stack([sym_jet.diff(l).value for l in range(n)], axis=3)
        a0 = sym_jet.value
        gb = self.christoffel_lc.value
        return (da - np.einsum("mli,mjk->ijkl", gb, a0) - np.einsum("mlj,imk->ijkl", gb, a0)
                - np.einsum("mlk,ijm->ijkl", gb, a0))

    @cached_property
    def curvature(self) -> np.ndarray:
        gb_jet = self.christoffel_lc
        dgb = np.stack([gb_jet.diff(k).value for k in range(self.n)], axis=3)  # [l,i,j,k] = d_k G^l_ij
        gb = gb_jet.value
        return (np.einsum("lkij->lijk", dgb) - np.einsum("ljik->lijk", dgb)
                + np.einsum("ljm,mki->lijk", gb, gb) - np.einsum("lkm,mji->lijk", gb, gb))

    def invariants(self) -> InvariantSet:
        a1, a2, mismatch = self.cubic_form
        shape = self.shape
        frame = self.frame
        gamma, coef = self.gauss_split
        normal_defect = np.abs(coef.value - frame.g).max() / np.abs(frame.g).max()
        j_value = _pick(frame.g_inv, a1) if self.n >= 2 else None
        return InvariantSet(
            position=self.x.value, xi=self.xi.value, Gamma=gamma.value,
            Gamma_LC=self.christoffel_lc.value, A=a1, B=shape["B"],
            shape_operator=shape["mixed"], eigenvalues=shape["eigenvalues"], L1=shape["L1"],
            J=j_value, R=self.curvature, nablaA=self.nabla_a, frame=frame, A_route2=a2,
            route_mismatch=mismatch, normal_defect=normal_defect,
        )


def _symmetrize3(a: np.ndarray) -> np.ndarray:
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    return sum(a.transpose(p) for p in perms) / 6.0


def _symmetrize3_jet(a: Jet) -> Jet:
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    total = a.transpose(*perms[0])
    for p in perms[1:]:
        total = total + a.transpose(*p)
    return total * (1.0 / 6.0)


def _pick(g_inv: np.ndarray, a: np.ndarray) -> float:
    n = a.shape[0]
    return float(np.einsum("ia,jb,kc,ijk,abc->", g_inv, g_inv, g_inv, a, a) / (n * (n - 1)))


# -- public operations ---------------------------------------------------------


def blaschke_data(chart: ImmersionChart, u) -> MetricFrame:
    return _Local(chart, u).frame


def affine_normal_field(chart: ImmersionChart, u) -> np.ndarray:
    return _Local(chart, u).xi.value


def induced_connection(chart: ImmersionChart, u) -> np.ndarray:
    return _Local(chart, u).gauss_split[0].value


def fubini_pick_form(chart: ImmersionChart, u) -> np.ndarray:
    return _Local(chart, u).cubic_form[0]


def shape_operator(chart: ImmersionChart, u) -> tuple[np.ndarray, np.ndarray, float]:
    s = _Local(chart, u).shape
    return s["B"], s["eigenvalues"], s["L1"]


def pick_invariant(frame: MetricFrame, A: np.ndarray) -> float:
    """J = |A|^2_g / (n(n-1)); undefined on curves."""
    if A.shape[0] < 2:
        raise UndefinedError("the Pick invariant needs n >= 2")
    return _pick(frame.g_inv, A)


def nabla_A(chart: ImmersionChart, u) -> np.ndarray:
    return _Local(chart, u).nabla_a


def curvature_tensor(chart: ImmersionChart, u) -> np.ndarray:
    return _Local(chart, u).curvature


def invariants(chart: ImmersionChart, u) -> InvariantSet:
    """Every invariant at u from a single pass of the pipeline."""
    return _Local(chart, u).invariants()


# -- identities used by the verification harness ------------------------------


def apolarity_residual(inv: InvariantSet) -> float:
    """max_k |g^ij A_ijk| / |A|, with |A| floored by |g| so A = 0 is not divided by."""
    tr = np.einsum("ij,ijk->k", inv.frame.g_inv, inv.A)
    return float(np.abs(tr).max() / _tensor_scale(inv))


def trace_identity_residual(inv: InvariantSet) -> float:
    n = inv.dim
    lhs = np.einsum("lm,mijl->ij", inv.frame.g_inv, inv.nablaA)
    rhs = 0.5 * n * (inv.L1 * inv.frame.g - inv.B)
    return float(np.abs(lhs - rhs).max() / _tensor_scale(inv))


def codazzi_residual(inv: InvariantSet) -> float:
    g, b = inv.frame.g, inv.B
    lhs = inv.nablaA - inv.nablaA.transpose(0, 1, 3, 2)
    # symmetric in (i, j) like the left side; its g^{il} trace reproduces the trace identity
    rhs = 0.5 * (np.einsum("ik,jl->ijkl", g, b) + np.einsum("jk,il->ijkl", g, b)
                 - np.einsum("il,jk->ijkl", g, b) - np.einsum("jl,ik->ijkl", g, b))
    return float(np.abs(lhs - rhs).max() / _tensor_scale(inv))


def gauss_equation_rhs(inv: InvariantSet, sphere: bool = False) -> np.ndarray:
    """Right side of the affine Gauss equation as [l, i, j, k] = dx^l(R(d_j, d_k) d_i).

    With ``sphere=True`` the shape operator is replaced by L1 * Id.
    """
    n = inv.dim
    g, g_inv = inv.frame.g, inv.frame.g_inv
    if sphere:
        bmix = inv.L1 * np.eye(n)
        b_low = inv.L1 * g
    else:
        bmix, b_low = inv.shape_operator, inv.B
    eye = np.eye(n)
    term = 0.5 * (np.einsum("ki,lj->lijk", g, bmix) + np.einsum("ki,lj->lijk", b_low, eye)
                  - np.einsum("ji,lk->lijk", g, bmix) - np.einsum("ji,lk->lijk", b_low, eye))
    amap = np.einsum("lp,jmp->jlm", g_inv, inv.A)  # amap[j] = matrix of A(d_j)
    comm = np.einsum("jlm,kmi->lijk", amap, amap) - np.einsum("klm,jmi->lijk", amap, amap)
    return term - comm


def gauss_residual(inv: InvariantSet, sphere: bool = False) -> float:
    """Relative residual; the scale is the largest term entering either side, floored at 1."""
    rhs = gauss_equation_rhs(inv, sphere)
    a_sq = np.abs(inv.A).max() ** 2 * np.abs(inv.frame.g_inv).max()
    scale = max(np.abs(inv.R).max(), np.abs(rhs).max(), abs(inv.L1), np.abs(inv.B).max(), a_sq, 1.0)
    return float(np.abs(inv.R - rhs).max() / scale)


def _tensor_scale(inv: InvariantSet) -> float:
    return max(np.abs(inv.A).max(), np.abs(inv.frame.g).max())


@dataclass(frozen=True)
class SphereVerdict:
    is_proper_sphere: bool
    is_hyperbolic: bool
    L1: float
    center_residual: float
    eigen_spread: float
    l1_spread: float
    samples: int


def classify_sphere(chart: ImmersionChart, samples: Sequence[Sequence[float]], tol: float = 1e-9) -> SphereVerdict:
    """Decide whether the chart is a proper affine sphere centered at the origin.

    Residuals are relative: eigenvalue spread and L1 spread against |L1|,
    the center residual |xi + L1 x| against |xi|.
    """
    samples = [np.atleast_1d(np.asarray(s, dtype=float)) for s in samples]
    if len(samples) < 3:
        raise ValueError("classify_sphere needs at least 3 sample points")
    l1s, spreads, centers = [], [], []
    for u in samples:
        inv = invariants(chart, u)
        l1s.append(inv.L1)
        spreads.append(inv.eigenvalues.max() - inv.eigenvalues.min())
        centers.append(np.linalg.norm(inv.xi + inv.L1 * inv.position) / np.linalg.norm(inv.xi))
    l1s = np.array(l1s)
    mean_l1 = float(l1s.mean())
    scale = max(abs(mean_l1), 1e-300)
    eigen_spread = float(max(spreads) / scale)
    l1_spread = float((l1s.max() - l1s.min()) / scale)
    center = float(max(centers))
    proper = eigen_spread <= tol and l1_spread <= tol and center <= tol
    return SphereVerdict(proper, proper and mean_l1 < 0, mean_l1, center, eigen_spread, l1_spread, len(samples))
