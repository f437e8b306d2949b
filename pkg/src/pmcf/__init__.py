"""Volume- and area-preserving mean curvature flow of radial graphs in Schwarzschild-type spaces."""

__version__ = "0.1.0"

from .ambient import AmbientMetric, Perturbation, christoffels, metric_jet, named_perturbation, quadrupole, ricci
from .diagnostics import DiagRow, RateFit, audit_monotonicity, fit_rate, record
from .errors import (
    BlowupError,
    ConfigError,
    DomainError,
    FlowUndefinedError,
    GraphConditionError,
    PMCFError,
    PreconditionError,
    StencilError,
)
from .flow import FlowConfig, FlowKind, FlowState, Termination, run, speed_average, step, sweep_threshold
from .sphere import SphericalGrid, real_harmonic
from .stability import assemble, compare_rates, spectrum
from .surface import (
    RadialGraph,
    area,
    enclosed_volume,
    geometry,
    isoperimetric_ratio,
    make_sphere,
    perturb,
    sphere_of_area,
    sphere_of_volume,
    variation_check,
)
