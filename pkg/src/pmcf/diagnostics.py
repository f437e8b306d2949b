"""Time-series diagnostics of a flow: recording, CSV I/O, rate fits and audits."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields as dc_fields
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import DomainError
from .surface import enclosed_volume, geometry

__all__ = [
    "CSV_COLUMNS",
    "DiagRow",
    "RateFit",
    "Violation",
    "AuditReport",
    "AuditTolerances",
    "record",
    "write_series",
    "read_series",
    "fit_rate",
    "audit_monotonicity",
]

CSV_COLUMNS = (
    "t",
    "area",
    "volume",
    "avg_speed",
    "max_dev",
    "l2_dev",
    "iso_ratio",
    "kappa_min",
    "kappa_max",
    "max_ring",
    "min_chi",
    "max_gradH",
)


@dataclass(frozen=True)
class DiagRow:
    t: float
    area: float
    volume: float
    avg_speed: float
    max_dev: float
    l2_dev: float
    iso_ratio: float
    kappa_min: float
    kappa_max: float
    max_ring: float
    min_chi: float
    max_gradH: float
    # not written to CSV
    min_H: Optional[float] = None
    step: Optional[int] = None

    def __post_init__(self):
        for name in CSV_COLUMNS:
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"diagnostic {name} is not finite")
        if self.kappa_min > self.kappa_max:
            raise DomainError("kappa_min exceeds kappa_max")

    def as_csv(self):
        return [getattr(self, c) for c in CSV_COLUMNS]


def record(state, kind, step: Optional[int] = None) -> DiagRow:
    """Diagnostics of the current surface; a pure function of ``state.graph``."""
    from .flow import speed_average

    graph = state.graph
    f = state.last_fields if state.last_fields is not None else geometry(graph, eps_graph=-np.inf)
    avg = speed_average(f, kind)
    dev = f.H - avg
    a = f.area
    vol = enclosed_volume(graph)
    H_t, H_p = graph.grid.derivatives(f.H, order=1)
    gi = f.g_inv
    grad2 = gi[..., 0, 0] * H_t**2 + 2 * gi[..., 0, 1] * H_t * H_p + gi[..., 1, 1] * H_p**2
    return DiagRow(
        t=float(state.t),
        area=a,
        volume=vol,
        avg_speed=float(avg),
        max_dev=float(np.max(np.abs(dev))),
        l2_dev=math.sqrt(max(f.integrate(dev**2), 0.0)),
        iso_ratio=a**3 / vol**2,
        kappa_min=float(np.min(f.kappa1)),
        kappa_max=float(np.max(f.kappa2)),
        max_ring=float(np.sqrt(np.max(np.maximum(f.ring2, 0.0)))),
        min_chi=float(np.min(f.chi)),
        max_gradH=float(np.sqrt(np.max(np.maximum(grad2, 0.0)))),
        min_H=float(np.min(f.H)),
        step=step if step is not None else getattr(state, "step_index", None),
    )


def write_series(rows: Sequence[DiagRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([repr(float(v)) for v in r.as_csv()])


def read_series(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise DomainError(f"unexpected series header in {path}: {','.join(header)}")
        return [DiagRow(*map(float, line)) for line in reader if line]


@dataclass(frozen=True)
class RateFit:
    rate: float
    r2: float
    window: tuple

    @property
    def lam(self) -> float:
        return self.rate


def fit_rate(series: Sequence[DiagRow], field: str = "max_dev", window=None) -> RateFit:
    """Least-squares slope of ``log(field)`` against ``t``; ``rate = -slope``.

    ``window`` is ``(t_a, t_b)``; rows with ``t`` inside it are used.
    """
    if field not in ("max_dev", "l2_dev"):
        raise ValueError(f"field must be max_dev or l2_dev, got {field!r}")
    t = np.array([r.t for r in series], dtype=float)
    v = np.array([getattr(r, field) for r in series], dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, v = t[sel], v[sel]
    if t.size < 10:
        raise DomainError(f"rate fit needs at least 10 samples, window has {t.size}")
    if np.any(v <= 0):
        raise DomainError(f"{field} is not strictly positive on the window")
    y = np.log(v)
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        raise DomainError(f"{field} is constant on the window; no decay rate")
    fit = stats.linregress(t, y)
    r2 = min(max(fit.rvalue**2, 0.0), 1.0)
    return RateFit(rate=-float(fit.slope), r2=float(r2), window=(float(t[0]), float(t[-1])))


@dataclass(frozen=True)
class Violation:
    index: int
    field: str
    amount: float


@dataclass
class AuditReport:
    violations: list
    notes: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self):
        return len(self.violations)


@dataclass(frozen=True)
class AuditTolerances:
    conserved_rtol: float = 1e-8
    monotone_atol: float = 1e-10
    iso_rtol: float = 1e-8


def audit_monotonicity(
    series: Sequence[DiagRow],
    kind,
    tolerances: AuditTolerances = AuditTolerances(),
    iso_floor: Optional[float] = None,
) -> AuditReport:
    """Check conservation and monotonicity laws along a series.

    VPMCF: volume conserved, area nonincreasing. APMCF: area conserved,
    volume nondecreasing on steps where ``min H > 0`` at both ends. Both:
    isoperimetric ratio nonincreasing and, if ``iso_floor`` is given, not below
    it. Signed amounts are the size of each breach beyond its tolerance.
    """
    from .flow import FlowKind

    kind = FlowKind(kind)
    if len(series) < 2:
        raise DomainError("audit needs at least two rows")
    tol = tolerances
    out, notes = [], []
    conserved = "volume" if kind is FlowKind.VPMCF else "area"
    monotone = "area" if kind is FlowKind.VPMCF else "volume"
    ref = getattr(series[0], conserved)
    skipped = []
    for i, row in enumerate(series):
        dev = abs(getattr(row, conserved) - ref) / abs(ref)
        if dev > tol.conserved_rtol:
            out.append(Violation(i, conserved, dev - tol.conserved_rtol))
        if iso_floor is not None:
            gap = (iso_floor - row.iso_ratio) / iso_floor
            if gap > tol.iso_rtol:
                out.append(Violation(i, "iso_floor", gap - tol.iso_rtol))
        if i == 0:
            continue
        prev = series[i - 1]
        change = getattr(row, monotone) - getattr(prev, monotone)
        if kind is FlowKind.VPMCF:
            if change > tol.monotone_atol:
                out.append(Violation(i, monotone, change - tol.monotone_atol))
        else:
            if _mean_convex(prev) and _mean_convex(row):
                if -change > tol.monotone_atol:
                    out.append(Violation(i, monotone, -change - tol.monotone_atol))
            else:
                skipped.append(i)
        di = (row.iso_ratio - prev.iso_ratio) / abs(prev.iso_ratio)
        if di > tol.iso_rtol:
            out.append(Violation(i, "iso_ratio", di - tol.iso_rtol))
    if skipped:
        notes.append(f"volume monotonicity skipped on {len(skipped)} interval(s) where min H <= 0: {skipped}")
    return AuditReport(out, notes)


def _mean_convex(row: DiagRow) -> bool:
    if row.min_H is not None:
        return row.min_H > 0
    return row.kappa_min + row.kappa_max > 0 and row.kappa_min > 0
