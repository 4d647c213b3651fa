"""simpleray: forward and inverse machinery for a first-order perturbation
of the wave operator on simple 2D disks -- geodesic flows, ray transforms,
geometric-optics data synthesis, a reference FDTD solver, and the staged
recovery pipeline with gauge alignment."""

from .fields import (
    CartesianGrid,
    CoefficientTriple,
    ConformalMetric,
    ConstantMetric,
    CovectorField,
    Domain,
    GridMetricField,
    MetricField,
    ScalarField,
    TrigPerturbMetric,
    apply_P,
    covector_from_spec,
    derived_BQ,
    laplace_beltrami,
    metric_from_spec,
    scalar_from_spec,
    triple_from_specs,
)
from .geodesics import (
    Geodesic,
    InflowGrid,
    SimplicityReport,
    boundary_distance,
    flow_continuity_gap,
    make_inflow_grid,
    shoot,
    simplicity_check,
    trace_rays,
)

__version__ = "0.1.0"
