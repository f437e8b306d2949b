"""Volume- and area-preserving mean curvature flow of radial graphs.

The surface moves with normal speed ``f = avg - H`` where ``avg`` is the
area-average ``h = int H / |M|`` (VPMCF) or ``h0 = int H^2 / int H``
(APMCF). In the radial chart this is ``d rho / dt = f / chi``. Time stepping
is classical RK4 with both averages recomputed at every stage.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .errors import BlowupError, DomainError, FlowUndefinedError, GraphConditionError
from .surface import (
    EPS_GRAPH,
    GeometryFields,
    RadialGraph,
    _volume_density,
    area,
    enclosed_volume,
    geometry,
    make_sphere,
    perturb,
    sphere_of_area,
    sphere_of_volume,
)

__all__ = [
    "FlowKind",
    "Termination",
    "FlowConfig",
    "FlowState",
    "RunResult",
    "SweepResult",
    "speed_average",
    "radial_velocity",
    "resolve_dt",
    "step",
    "run",
    "sweep_threshold",
    "bisect_threshold",
    "max_sweep_eps",
]


class FlowKind(str, enum.Enum):
    VPMCF = "VPMCF"
    APMCF = "APMCF"


class Termination(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_TIME = "MaxTime"
    GRAPH_FAIL = "GraphFail"
    BLOWUP = "Blowup"
    FLOW_UNDEFINED = "FlowUndefined"


@dataclass(frozen=True)
class FlowConfig:
    kind: FlowKind = FlowKind.VPMCF
    dt: Union[float, str] = "auto"
    c_cfl: float = 0.5
    t_max: float = 100.0
    tol_H: float = 1e-8
    dealias: bool = True
    volume_renorm: bool = False
    record_every: int = 1
    snapshot_every: int = 0
    eps_graph: float = EPS_GRAPH
    max_steps: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FlowKind(self.kind))
        if isinstance(self.dt, str):
            if self.dt != "auto":
                raise ValueError(f"dt must be a positive number or 'auto', got {self.dt!r}")
        elif not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.tol_H > 0:
            raise ValueError("tol_H must be positive")
        if not self.c_cfl > 0:
            raise ValueError("c_cfl must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class FlowState:
    graph: RadialGraph
    t: float = 0.0
    step_index: int = 0
    last_fields: Optional[GeometryFields] = None

    def fields(self, eps_graph: float = EPS_GRAPH) -> GeometryFields:
        if self.last_fields is not None:
            return self.last_fields
        return geometry(self.graph, eps_graph=eps_graph)


def speed_average(fields: GeometryFields, kind) -> float:
    """``h`` (VPMCF) or ``h0`` (APMCF) by grid quadrature."""
    kind = FlowKind(kind)
    int_h = fields.integrate(fields.H)
    if kind is FlowKind.VPMCF:
        return int_h / fields.area
    if not int_h > 0:
        raise FlowUndefinedError(f"APMCF needs int H dmu > 0, got {int_h:.6g}")
    return fields.integrate(fields.H**2) / int_h


def radial_velocity(fields: GeometryFields, f, eps_graph: float = EPS_GRAPH):
    """Radial speed ``f / chi`` producing normal speed ``f``."""
    chi = fields.chi
    if np.min(chi) <= eps_graph:
        k = int(np.argmin(chi))
        raise GraphConditionError(
            f"graph condition violated: chi = {chi.flat[k]:.3e} at node {k}", node=k, chi=float(chi.flat[k])
        )
    return np.asarray(f) / chi


def _rhs(graph, kind, eps_graph, fields=None):
    if fields is None:
        fields = geometry(graph, eps_graph=eps_graph)
    avg = speed_average(fields, kind)
    return radial_velocity(fields, avg - fields.H, eps_graph)


def resolve_dt(state: FlowState, config: FlowConfig) -> float:
    """Fixed dt, or ``c_cfl * h^2 / max(max|A|^2, 1)`` for ``dt='auto'``.

    ``h`` is the grid resolution length on the surface: the smallest metric
    radius ``rho |omega|_g`` divided by ``sqrt(L(L+1))``, i.e. the wavelength
    scale of the highest resolved harmonic.
    """
    if config.dt != "auto":
        return float(config.dt)
    graph = state.graph
    fields = state.fields(config.eps_graph)
    from .ambient import metric_tensor

    w = graph.grid.omega
    gww = np.einsum("...a,...ab,...b->...", w, metric_tensor(graph.metric, fields.y), w)
    h = float(np.min(graph.rho * np.sqrt(gww))) * graph.grid.min_node_spacing()
    return config.c_cfl * h * h / max(float(np.max(fields.A2)), 1.0)


def _checked(graph, rho):
    if not np.all(np.isfinite(rho)):
        raise BlowupError("non-finite radius during time step")
    return graph.with_rho(rho)


def _rk4(state, dt, config):
    graph = state.graph
    kind, eg = config.kind, config.eps_graph
    rho = graph.rho
    k1 = _rhs(graph, kind, eg, state.last_fields)
    k2 = _rhs(_checked(graph, rho + 0.5 * dt * k1), kind, eg)
    k3 = _rhs(_checked(graph, rho + 0.5 * dt * k2), kind, eg)
    k4 = _rhs(_checked(graph, rho + dt * k3), kind, eg)
    new = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(new)):
        raise BlowupError("non-finite radius after RK4 step")
    return new


def _renormalize_volume(graph, rho, target):
    """Uniform radial shift ``c`` with ``Vol(rho + c) = target`` (Newton)."""
    c = 0.0
    for _ in range(20):
        trial = graph.with_rho(rho + c)
        vol = enclosed_volume(trial)
        r = rho + c
        slope = graph.grid.integrate(_volume_density(graph.metric, r, graph.grid.omega) * r**graph.metric.n)
        dc = (target - vol) / slope
        c += dc
        if abs(dc) <= 1e-15 * float(np.max(rho)):
            break
    return rho + c


def step(state: FlowState, config: FlowConfig, volume_target: Optional[float] = None) -> FlowState:
    """Advance one RK4 step; on non-finite values retry once with ``dt/2``."""
    dt = resolve_dt(state, config)
    try:
        rho = _rk4(state, dt, config)
    except (BlowupError, FloatingPointError):
        dt = 0.5 * dt
        rho = _rk4(state, dt, config)
    graph = state.graph
    if config.dealias:
        rho = graph.grid.truncate(rho, (2 * graph.grid.L) // 3)
    if config.volume_renorm and config.kind is FlowKind.VPMCF:
        if volume_target is None:
            volume_target = enclosed_volume(graph)
        rho = _renormalize_volume(graph, rho, volume_target)
    return FlowState(graph=_checked(graph, rho), t=state.t + dt, step_index=state.step_index + 1)


@dataclass
class RunResult:
    termination: Termination
    state: FlowState
    rows: list
    initial: RadialGraph
    config: FlowConfig
    volume0: float
    area0: float
    r_ref: Optional[float] = None
    sup_dist: Optional[float] = None
    message: str = ""
    snapshots: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED

    @property
    def final_max_dev(self) -> Optional[float]:
        return self.rows[-1].max_dev if self.rows else None


def run(initial: RadialGraph, config: FlowConfig, progress=None) -> RunResult:
    """Integrate until ``max|H - avg| < tol_H`` or another terminal condition.

    ``progress``, if given, is called with every recorded diagnostics row.
    """
    from .diagnostics import record

    config = replace(config)
    state = FlowState(initial)
    vol0 = enclosed_volume(initial)
    area0 = area(initial)
    result = RunResult(Termination.MAX_TIME, state, [], initial, config, vol0, area0)

    def emit(st, force=False):
        if force or st.step_index % config.record_every == 0:
            if result.rows and result.rows[-1].step == st.step_index:
                return
            row = record(st, config.kind, step=st.step_index)
            result.rows.append(row)
            if progress is not None:
                progress(row)

    while True:
        try:
            fields = geometry(state.graph, eps_graph=config.eps_graph)
            state = replace(state, last_fields=fields)
            avg = speed_average(fields, config.kind)
        except (GraphConditionError, DomainError) as exc:
            result.termination, result.message = Termination.GRAPH_FAIL, str(exc)
            break
        except FlowUndefinedError as exc:
            result.termination, result.message = Termination.FLOW_UNDEFINED, str(exc)
            break
        dev = float(np.max(np.abs(fields.H - avg)))
        if not math.isfinite(dev):
            result.termination, result.message = Termination.BLOWUP, "non-finite mean curvature"
            break
        if config.snapshot_every and state.step_index % config.snapshot_every == 0:
            result.snapshots.append((state.step_index, state.graph.rho.copy()))
        if dev < config.tol_H:
            emit(state, force=True)
            result.termination = Termination.CONVERGED
            break
        emit(state)
        if state.t >= config.t_max * (1 - 1e-12) or (
            config.max_steps is not None and state.step_index >= config.max_steps
        ):
            emit(state, force=True)
            result.termination = Termination.MAX_TIME
            break
        try:
            state = step(state, config, volume_target=vol0)
        except (GraphConditionError, DomainError) as exc:
            result.termination, result.message = Termination.GRAPH_FAIL, str(exc)
            break
        except FlowUndefinedError as exc:
            result.termination, result.message = Termination.FLOW_UNDEFINED, str(exc)
            break
        except (BlowupError, FloatingPointError) as exc:
            result.termination, result.message = Termination.BLOWUP, str(exc)
            break

    result.state = state
    if not result.snapshots or result.snapshots[-1][0] != state.step_index:
        result.snapshots.append((state.step_index, state.graph.rho.copy()))
    if result.converged:
        metric = initial.metric
        if config.kind is FlowKind.VPMCF:
            result.r_ref = sphere_of_volume(metric, vol0)
        else:
            result.r_ref = sphere_of_area(metric, area0)
        result.sup_dist = float(np.max(np.abs(state.graph.rho - result.r_ref)))
    return result


@dataclass
class SweepResult:
    eps_star: float
    basin_exceeds_probe: bool
    probes: list  # (eps, termination)
    eps_max: float


def max_sweep_eps(metric, r0: float, mode) -> float:
    """Largest amplitude keeping ``min rho > 1.05 r_h`` for ``rho = r0 (1 + eps Y)``."""
    from .sphere import real_harmonic

    l, m_idx = mode
    theta = np.linspace(0, np.pi, 2001)
    phi = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    TH, PH = np.meshgrid(theta, phi, indexing="ij")
    neg = float(np.max(-real_harmonic(l, m_idx, TH, PH, normalization="max")))
    rh = metric.horizon
    if rh > 0:
        return (1.0 - 1.05 * rh / r0) / neg
    return 0.95 / neg


def bisect_threshold(converges, eps_min: float, eps_max: float, n_bisect: int = 8) -> SweepResult:
    """Bisection on ``(eps_min, eps_max]`` for a predicate ``converges(eps) -> (ok, termination)``."""
    probes = []

    def probe(eps):
        ok, term = converges(eps)
        probes.append((eps, term))
        return ok

    if probe(eps_max):
        return SweepResult(eps_max, True, probes, eps_max)
    lo, hi = eps_min, eps_max
    if not probe(lo):
        return SweepResult(0.0, False, probes, eps_max)
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    return SweepResult(lo, False, probes, eps_max)


def sweep_threshold(
    grid,
    metric,
    r0: float,
    mode,
    config: FlowConfig,
    eps_min: float = 1e-3,
    eps_max: Optional[float] = None,
    n_bisect: int = 8,
    on_probe=None,
) -> SweepResult:
    """Empirical stability threshold of the amplitude of ``mode`` on the sphere of radius ``r0``."""
    if eps_max is None:
        eps_max = max_sweep_eps(metric, r0, mode)

    def converges(eps):
        try:
            init = perturb(make_sphere(grid, metric, r0), mode, eps)
        except DomainError:
            return False, Termination.GRAPH_FAIL
        res = run(init, config)
        if on_probe is not None:
            on_probe(eps, res)
        return res.converged, res.termination

    return bisect_threshold(converges, eps_min, eps_max, n_bisect)
