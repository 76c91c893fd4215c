"""Exact finite-scale toolkit for coarse metric geometry.

Finite extended-rational metric spaces, Rips graphs at a scale, coarse median
operators with certified axiom defects, uniformly controlled diagrams with
consistent tuple spaces, orthogonality families with constraint pair spaces,
and the end-to-end assembly of a certified coarse median on the Rips graph of
a tuple space.  All constants are exact rationals with recorded witnesses.
"""

from .budget import Budget, DEFAULT_BUDGET
from .errors import BudgetError, FormatError, ToolkitError
from .metric import (
    INF,
    ControlFunction,
    ControlledMap,
    EquivalenceReport,
    FiniteMetricSpace,
    certify_coarse_equivalence,
    closeness_defect,
    directed_excess,
    ext_add,
    format_extended,
    graph_metric_to_json,
    hausdorff_distance,
    infinite_fiber_spread,
    is_infinite,
    linear_control,
    neighborhood,
    parse_extended,
    set_distance,
    space_from_json,
    space_to_json,
    upper_control_of,
)
from .rips import (
    DistortionTable,
    RipsGraph,
    comparison_map,
    filtration_distortion,
    rips_graph,
    rips_to_base,
)
from .median import (
    CoarseInterval,
    FivePointResult,
    InducedMedian,
    IntervalCheck,
    IntervalReport,
    MedianCertificate,
    OperatorControl,
    ScaledMedian,
    TernaryOp,
    TransferredMedian,
    TripodResult,
    cmp_defect,
    coarse_interval,
    five_point_defect,
    graph_median_op,
    induce_median,
    interval_lemma_check,
    median_certificate,
    median_from_json,
    median_to_json,
    one_median_op,
    product_median,
    rips_median,
    table_op,
    transfer_median,
    tripod_defect,
)
from .diagram import (
    Arrow,
    AssembledCone,
    BoundCheck,
    ClosureReport,
    Cone,
    MedianDiagram,
    RipsTupleApex,
    Shape,
    StabilizationRow,
    StabilizationTable,
    TupleFactorization,
    TupleSpace,
    UCDiagram,
    assemble_median_cone,
    build_cone,
    compat_order_defect,
    cone_defect,
    diagram_from_json,
    diagram_to_json,
    factor_through_tuples,
    median_diagram_from_json,
    median_diagram_to_json,
    median_tuple_closure,
    rips_tuple_apex,
    tuple_space,
    tuple_stabilization,
)
from .hhs import (
    ConstraintData,
    ConstraintSpace,
    EnlargementReport,
    Family,
    HHSBuild,
    PairwiseDefect,
    bcii_defect,
    build_hhs_diagram,
    constraint_space,
    delta_centre_median,
    enlargement_stability,
    family_from_json,
    family_to_json,
    hyperbolicity,
    pairwise_subalgebra_defect,
    toy_family,
)

__version__ = "0.1.0"
