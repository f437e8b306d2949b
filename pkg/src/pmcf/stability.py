"""Linearized flow operator at a CMC surface and its spectrum.

The operator acts on normal displacements ``eta``:

    full:     L eta = Lap eta + (Ric(nu,nu) + |A|^2) eta + avg((H^2 - |A|^2 - Ric(nu,nu)) eta)
    reduced:  L eta = Lap eta + Ric(nu,nu) eta          + avg((H^2 - |A|^2 - Ric(nu,nu)) eta)

where ``avg`` is the area average. The two differ only in the local ``|A|^2``
term. It is discretised by Galerkin projection onto real spherical harmonics
up to degree ``L_op`` with the weak Laplacian ``-int <grad Y_a, grad Y_b> dmu``,
so the stiffness and mass matrices are symmetric by construction. The
rank-one average term is symmetrised.

Eigenvalues follow the convention ``d eta / dt = L eta``: negative means
decaying, and the predicted decay rate is minus the largest eigenvalue on the
constrained subspace (``int eta dmu = 0`` for volume, ``int H eta dmu = 0``
for area).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .ambient import ricci
from .errors import DomainError, PreconditionError
from .sphere import SphericalGrid
from .surface import RadialGraph, geometry

__all__ = [
    "LinearizedOperator",
    "SpectrumReport",
    "assemble",
    "spectrum",
    "compare_rates",
    "write_spectrum",
    "axisymmetric_even",
]

VARIANTS = ("full", "reduced")
CONSTRAINTS = ("volume", "area", "none")


@dataclass(frozen=True)
class LinearizedOperator:
    degrees: np.ndarray  # (N,) degree l of each basis function
    orders: np.ndarray  # (N,) signed order m
    stiffness: np.ndarray  # K_ab = <Y_a, L Y_b>, symmetrised
    mass: np.ndarray  # M_ab = <Y_a, Y_b>
    volume_functional: np.ndarray  # int Y_a dmu
    area_functional: np.ndarray  # int H Y_a dmu
    surface_area: float
    variant: str
    L_op: int
    asymmetry: float = 0.0  # max|K - K^T| / max|K| before symmetrisation

    @property
    def size(self) -> int:
        return len(self.degrees)

    def block_leakage(self) -> float:
        """Largest stiffness entry coupling different degrees, relative to the largest entry."""
        cross = self.degrees[:, None] != self.degrees[None, :]
        return float(np.max(np.abs(self.stiffness[cross])) / np.max(np.abs(self.stiffness)))


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    degree_hints: np.ndarray
    predicted_rate: float
    l0_eigenvalue: float
    variant: str
    constraint: str


def assemble(
    graph: RadialGraph,
    L_op: int,
    variant: str = "full",
    umbilic_tol: Optional[float] = 1e-8,
    cmc_tol: Optional[float] = 1e-8,
    quad_L: Optional[int] = None,
) -> LinearizedOperator:
    """Galerkin matrices of the linearized operator at ``graph``.

    ``graph`` should be a CMC surface; the checks on ``max|ring A|`` and
    ``max|H - h|`` can be relaxed (or skipped with ``None``) for surfaces that
    are only numerically CMC, such as converged flows in perturbed metrics.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if L_op < 0:
        raise ValueError("L_op must be nonnegative")
    fields = geometry(graph)
    ring = float(np.sqrt(np.max(fields.ring2)))
    if umbilic_tol is not None and ring > umbilic_tol:
        raise PreconditionError(f"surface is not umbilic: max|ring A| = {ring:.3e} > {umbilic_tol:g}")
    h = fields.integrate(fields.H) / fields.area
    dev = float(np.max(np.abs(fields.H - h)))
    if cmc_tol is not None and dev > cmc_tol:
        raise PreconditionError(f"surface is not CMC: max|H - h| = {dev:.3e} > {cmc_tol:g}")

    if quad_L is None:
        round_ = float(np.ptp(graph.rho)) == 0.0
        quad_L = max(graph.grid.L, L_op if round_ else 2 * L_op)
    qgrid = SphericalGrid(quad_L)
    if quad_L != graph.grid.L:
        graph = RadialGraph(qgrid, graph.grid.resample(graph.rho, qgrid), graph.metric)
        fields = geometry(graph)

    ric = ricci(graph.metric, fields.y)
    ric_nn = np.einsum("...a,...ab,...b->...", fields.nu, ric, fields.nu)
    local = ric_nn + fields.A2 if variant == "full" else ric_nn
    avg_weight = fields.H**2 - fields.A2 - ric_nn

    modes = [(l, m) for l in range(L_op + 1) for m in range(-l, l + 1)]
    Y, Yt, Yp = (np.array(a).reshape(len(modes), -1) for a in zip(*(qgrid.real_harmonic_derivs(l, m) for l, m in modes)))
    w = fields.dmu.ravel()
    gi = fields.g_inv.reshape(-1, 2, 2)

    mass = (Y * w) @ Y.T
    grad = (
        (Yt * (w * gi[:, 0, 0])) @ Yt.T
        + (Yt * (w * gi[:, 0, 1])) @ Yp.T
        + (Yp * (w * gi[:, 1, 0])) @ Yt.T
        + (Yp * (w * gi[:, 1, 1])) @ Yp.T
    )
    K = -grad + (Y * (w * local.ravel())) @ Y.T
    b = Y @ w
    c = Y @ (w * avg_weight.ravel())
    K = K + np.outer(b, c) / fields.area
    asym = float(np.max(np.abs(K - K.T)) / np.max(np.abs(K)))
    K = 0.5 * (K + K.T)
    mass = 0.5 * (mass + mass.T)
    return LinearizedOperator(
        degrees=np.array([l for l, _ in modes]),
        orders=np.array([m for _, m in modes]),
        stiffness=K,
        mass=mass,
        volume_functional=b,
        area_functional=Y @ (w * fields.H.ravel()),
        surface_area=fields.area,
        variant=variant,
        L_op=L_op,
        asymmetry=asym,
    )


def axisymmetric_even(l: int, m: int) -> bool:
    """Basis filter for data invariant under rotations about the z-axis and under z -> -z."""
    return m == 0 and l % 2 == 0


def spectrum(
    op: LinearizedOperator,
    constraint: str = "volume",
    select: Optional[Callable[[int, int], bool]] = None,
) -> SpectrumReport:
    """Generalised symmetric eigensolve ``K x = lambda M x``.

    ``constraint`` restricts to the ``M``-complement of the volume (constants)
    or area (``H``-weighted) direction. ``select(l, m)`` restricts the basis to
    an invariant subspace, e.g. the symmetry class of the initial data.
    """
    if constraint not in CONSTRAINTS:
        raise ValueError(f"constraint must be one of {CONSTRAINTS}, got {constraint!r}")
    keep = np.ones(op.size, dtype=bool)
    if select is not None:
        keep = np.array([bool(select(int(l), int(m))) for l, m in zip(op.degrees, op.orders)])
        if not keep.any():
            raise DomainError("subspace selector kept no basis functions")
    K = op.stiffness[np.ix_(keep, keep)]
    M = op.mass[np.ix_(keep, keep)]
    degrees = op.degrees[keep]

    # Rayleigh quotient of the constant direction
    one = np.linalg.solve(op.mass, op.volume_functional)
    l0 = float(one @ op.stiffness @ one / (one @ op.mass @ one))

    if constraint == "none":
        Z = np.eye(K.shape[0])
    else:
        f = op.volume_functional if constraint == "volume" else op.area_functional
        f = f[keep]
        if np.linalg.norm(f) <= 1e-12 * np.sqrt(op.surface_area):
            Z = np.eye(K.shape[0])
        else:
            Z = linalg.null_space(f[None, :])
    vals, vecs = linalg.eigh(Z.T @ K @ Z, Z.T @ M @ Z)
    coeffs = Z @ vecs
    hints = np.array([_dominant_degree(degrees, coeffs[:, k]) for k in range(coeffs.shape[1])])
    return SpectrumReport(
        eigenvalues=vals,
        degree_hints=hints,
        predicted_rate=-float(vals[-1]),
        l0_eigenvalue=l0,
        variant=op.variant,
        constraint=constraint,
    )


def _dominant_degree(degrees, x):
    power = np.bincount(degrees, weights=x**2)
    return int(np.argmax(power))


def compare_rates(report: SpectrumReport, observed, min_r2: float = 0.99) -> float:
    """Relative error ``|predicted - observed| / predicted`` of decay rates."""
    if report.predicted_rate <= 0:
        raise DomainError(
            f"predicted rate {report.predicted_rate:.3e} is not positive; a neutral or unstable mode dominates"
        )
    if observed.r2 < min_r2:
        raise PreconditionError(f"rate fit has r2 = {observed.r2:.4f} < {min_r2}")
    return abs(report.predicted_rate - observed.rate) / report.predicted_rate


def write_spectrum(report: SpectrumReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "degree_hint", "eigenvalue"])
        for i, (d, v) in enumerate(zip(report.degree_hints, report.eigenvalues)):
            w.writerow([i, int(d), repr(float(v))])
