"""Equiaffine invariants from jets, and Calabi composition of hyperbolic affine hyperspheres."""

from . import jets
from .calabi import (
    CompositionSpec,
    IndexLayout,
    Prediction,
    compose,
    layout,
    mean_curvature_vectors,
    normalization_constants,
    predict_all,
    structure_constant,
    weight_functions,
)
from .equiaffine import (
    DegenerateError,
    ImmersionChart,
    InvariantSet,
    MetricFrame,
    NonTangentialError,
    RouteMismatchError,
    SingularFrameError,
    UndefinedError,
    affine_normal_field,
    blaschke_data,
    classify_sphere,
    curvature_tensor,
    fubini_pick_form,
    induced_connection,
    invariants,
    nabla_A,
    pick_invariant,
    shape_operator,
)
from .factors import (
    Composite,
    Flat,
    Hyperboloid,
    Point,
    factor_invariants,
    flat_closed_forms,
    make_flat_factor,
    make_hyperboloid_factor,
    make_point_factor,
)
from .jets import Jet, JetSpace

__version__ = "0.1.0"
