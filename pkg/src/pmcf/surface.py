"""Radial-graph hypersurfaces ``y = rho(omega) omega`` and their extrinsic geometry.

Only 2-spheres in a 3-dimensional ambient space are discretised; the
closed-form helpers (sphere curvature, area element) accept general ``n``.

Conventions: ``nu`` is the outward ambient-unit normal, the second
fundamental form is ``A_ij = g(D_i nu, F_j) = -g(nu, D_i F_j)`` so that
coordinate spheres are positively curved, and ``H = g^ij A_ij``.
``chi = g(omega, nu)`` is the graph factor: a radial velocity ``rho_t`` moves
the surface with normal speed ``chi * rho_t``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import roots_legendre

from .ambient import AmbientMetric, conformal_factor, metric_and_connection, metric_tensor
from .errors import DomainError, GraphConditionError
from .sphere import SphericalGrid, real_harmonic

__all__ = [
    "RadialGraph",
    "GeometryFields",
    "make_sphere",
    "perturb",
    "geometry",
    "area",
    "enclosed_volume",
    "isoperimetric_ratio",
    "sphere_of_volume",
    "sphere_of_area",
    "sphere_principal_curvature",
    "sphere_area",
    "variation_check",
    "write_snapshot",
    "read_snapshot",
    "EPS_GRAPH",
]

EPS_GRAPH = 1e-3
VOLUME_RTOL = 1e-10


@dataclass(frozen=True)
class RadialGraph:
    grid: SphericalGrid
    rho: np.ndarray
    metric: AmbientMetric

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        if rho.shape != self.grid.shape:
            raise ValueError(f"rho has shape {rho.shape}, grid expects {self.grid.shape}")
        if self.metric.n != 2:
            raise DomainError("radial graphs are discretised for n = 2 only")
        if not np.all(np.isfinite(rho)):
            raise DomainError("rho is not finite at every node")
        rh = self.metric.horizon
        if np.min(rho) <= rh:
            k = int(np.argmin(rho))
            j, i = np.unravel_index(k, self.grid.shape)
            raise DomainError(
                f"graph touches the horizon: rho = {rho.flat[k]:.6g} <= r_h = {rh:.6g} at node {k} "
                f"(theta={self.grid.theta[j]:.4f}, phi={self.grid.phi[i]:.4f})"
            )
        object.__setattr__(self, "rho", rho)

    def with_rho(self, rho) -> "RadialGraph":
        return replace(self, rho=np.asarray(rho, dtype=float))

    def coefficients(self):
        return self.grid.analyze(self.rho)


@dataclass(frozen=True)
class GeometryFields:
    """Per-node extrinsic geometry; arrays have the grid shape as leading axes."""

    y: np.ndarray
    F_t: np.ndarray
    F_p: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    nu: np.ndarray
    nu_lower: np.ndarray
    chi: np.ndarray
    A: np.ndarray
    H: np.ndarray
    kappa1: np.ndarray
    kappa2: np.ndarray
    A2: np.ndarray
    ring2: np.ndarray
    area_density: np.ndarray
    dmu: np.ndarray

    @property
    def area(self) -> float:
        return float(np.sum(self.dmu.ravel()))

    def integrate(self, f) -> float:
        """Integral of a node field against the surface measure."""
        return float(np.sum((np.asarray(f) * self.dmu).ravel()))


def sphere_principal_curvature(m: float, r0: float, n: int = 2) -> float:
    """Principal curvature of the coordinate sphere of radius ``r0``."""
    phi = 1.0 + m / (2.0 * r0 ** (n - 1))
    return phi ** (-(n + 1.0) / (n - 1)) / r0 * (1.0 - m / (2.0 * r0 ** (n - 1)))


def sphere_area(m: float, r0: float, n: int = 2) -> float:
    """Area of the coordinate sphere: ``|S^n| r0^n phi^(2n/(n-1))``."""
    from scipy.special import gamma

    phi = 1.0 + m / (2.0 * r0 ** (n - 1))
    omega_n = 2 * np.pi ** ((n + 1) / 2) / gamma((n + 1) / 2)
    return float(omega_n * r0**n * phi ** (2.0 * n / (n - 1)))


def make_sphere(grid: SphericalGrid, metric: AmbientMetric, r0: float) -> RadialGraph:
    if not r0 > metric.horizon:
        raise DomainError(f"sphere radius {r0} must exceed the horizon radius {metric.horizon:.6g}")
    return RadialGraph(grid, np.full(grid.shape, float(r0)), metric)


def perturb(graph: RadialGraph, mode, eps: float) -> RadialGraph:
    """``rho <- rho (1 + eps Y_lm)`` with the real harmonic scaled to ``max|Y| = 1``."""
    l, m_idx = mode
    if l > graph.grid.L:
        raise DomainError(f"mode degree {l} exceeds band limit {graph.grid.L}")
    if eps == 0:
        return graph
    Y = graph.grid.real_harmonic(l, m_idx, normalization="max")
    return graph.with_rho(graph.rho * (1.0 + eps * Y))


def _raise_graph_failure(graph, chi, eps_graph):
    k = int(np.argmin(chi))
    j, i = np.unravel_index(k, graph.grid.shape)
    th, ph = float(graph.grid.theta[j]), float(graph.grid.phi[i])
    raise GraphConditionError(
        f"graph condition violated: chi = {chi.flat[k]:.3e} <= {eps_graph:g} at node {k} "
        f"(theta={th:.4f}, phi={ph:.4f})",
        node=k,
        theta=th,
        phi=ph,
        chi=float(chi.flat[k]),
    )


def geometry(graph: RadialGraph, eps_graph: float = EPS_GRAPH) -> GeometryFields:
    # degenerate graphs produce inf/nan here; they are caught by the chi check below
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _geometry(graph, eps_graph)


def _geometry(graph, eps_graph):
    grid = graph.grid
    rho = graph.rho
    r_t, r_p, r_tt, r_tp, r_pp = grid.derivatives(rho)
    w = grid.omega
    w_t, w_p, w_tt, w_tp, w_pp = grid.omega_derivs
    R = rho[..., None]
    y = R * w
    F_t = r_t[..., None] * w + R * w_t
    F_p = r_p[..., None] * w + R * w_p
    F_tt = r_tt[..., None] * w + 2 * r_t[..., None] * w_t + R * w_tt
    F_tp = r_tp[..., None] * w + r_t[..., None] * w_p + r_p[..., None] * w_t + R * w_tp
    F_pp = r_pp[..., None] * w + 2 * r_p[..., None] * w_p + R * w_pp

    G, Ginv, connection = metric_and_connection(graph.metric, y)

    F = np.stack([F_t, F_p], axis=-2)  # (..., 2, 3)
    g2 = F @ G @ np.swapaxes(F, -1, -2)
    g2 = 0.5 * (g2 + np.swapaxes(g2, -1, -2))
    det2 = g2[..., 0, 0] * g2[..., 1, 1] - g2[..., 0, 1] ** 2
    g2inv = np.empty_like(g2)
    g2inv[..., 0, 0] = g2[..., 1, 1] / det2
    g2inv[..., 1, 1] = g2[..., 0, 0] / det2
    g2inv[..., 0, 1] = g2inv[..., 1, 0] = -g2[..., 0, 1] / det2

    n_low = np.cross(F_t, F_p)
    nu = (Ginv @ n_low[..., None])[..., 0]
    norm = np.sqrt(np.sum(n_low * nu, axis=-1))
    nu = nu / norm[..., None]
    n_low = n_low / norm[..., None]
    chi = np.sum(n_low * w, axis=-1)
    if not np.all(np.isfinite(chi)) or np.min(chi) <= eps_graph:
        _raise_graph_failure(graph, np.where(np.isfinite(chi), chi, -np.inf), eps_graph)

    # covariant second derivatives D_i F_j for (i, j) = tt, tp, pp
    X = np.stack([F_t, F_t, F_p], axis=-2)
    Y = np.stack([F_t, F_p, F_p], axis=-2)
    D = np.stack([F_tt, F_tp, F_pp], axis=-2) + connection(X, Y)
    a = -np.sum(D * n_low[..., None, :], axis=-1)
    A = np.empty_like(g2)
    A[..., 0, 0] = a[..., 0]
    A[..., 1, 1] = a[..., 2]
    A[..., 0, 1] = A[..., 1, 0] = a[..., 1]

    H = np.sum(g2inv * A, axis=(-2, -1))
    ring = A - 0.5 * H[..., None, None] * g2
    M = g2inv @ A
    Mr = g2inv @ ring
    A2 = np.sum(M * np.swapaxes(M, -1, -2), axis=(-2, -1))
    ring2 = np.sum(Mr * np.swapaxes(Mr, -1, -2), axis=(-2, -1))
    disc = np.sqrt(np.maximum(ring2, 0.0) / 2.0)
    k1 = 0.5 * H - disc
    k2 = 0.5 * H + disc

    density = np.sqrt(det2) / np.sin(grid.TH)
    return GeometryFields(
        y=y,
        F_t=F_t,
        F_p=F_p,
        g=g2,
        g_inv=g2inv,
        nu=nu,
        nu_lower=n_low,
        chi=chi,
        A=A,
        H=H,
        kappa1=k1,
        kappa2=k2,
        A2=A2,
        ring2=ring2,
        area_density=density,
        dmu=density * grid.weights,
    )


def area(graph: RadialGraph) -> float:
    return geometry(graph, eps_graph=-np.inf).area


def _volume_density(metric: AmbientMetric, s, omega):
    """sqrt(det g) at the points ``s * omega``."""
    n = metric.n
    if metric.perturbation is None:
        phi = 1.0 + metric.m / (2.0 * s ** (n - 1))
        return phi ** (2.0 * (n + 1) / (n - 1))
    points = s[..., None] * omega
    g = metric_tensor(metric, points)
    if g.shape[-1] != 3:
        return np.sqrt(np.linalg.det(g))
    det = (
        g[..., 0, 0] * (g[..., 1, 1] * g[..., 2, 2] - g[..., 1, 2] * g[..., 2, 1])
        - g[..., 0, 1] * (g[..., 1, 0] * g[..., 2, 2] - g[..., 1, 2] * g[..., 2, 0])
        + g[..., 0, 2] * (g[..., 1, 0] * g[..., 2, 1] - g[..., 1, 1] * g[..., 2, 0])
    )
    return np.sqrt(det)


def _radial_segments(metric, rho):
    """Breakpoint-split integration intervals [a, b] per node, shape (k, ...)."""
    lo = np.full_like(rho, metric.horizon)
    cuts = []
    if metric.perturbation is not None:
        cuts = sorted(b for b in metric.perturbation.breakpoints if b > metric.horizon)
    edges = [lo] + [np.clip(np.full_like(rho, c), lo, rho) for c in cuts] + [rho]
    return list(zip(edges[:-1], edges[1:]))


def _radial_integral(metric, omega, rho, order):
    x, wq = roots_legendre(order)
    total = np.zeros_like(rho)
    for a, b in _radial_segments(metric, rho):
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        s = mid[..., None] + half[..., None] * x  # (..., q)
        f = _volume_density(metric, s, omega[..., None, :]) * s**metric.n
        total = total + half * np.sum(f * wq, axis=-1)
    return total


def _radial_volume(metric, omega, rho):
    """Per-direction ``int_{r_h}^{rho} sqrt(det g)(s omega) s^n ds`` by order-doubling Gauss-Legendre."""
    order = 16
    prev = _radial_integral(metric, omega, rho, order)
    while order < 384:
        order *= 2
        cur = _radial_integral(metric, omega, rho, order)
        scale = np.maximum(np.abs(cur), np.finfo(float).tiny)
        if np.max(np.abs(cur - prev) / scale) <= VOLUME_RTOL:
            return cur
        prev = cur
    return prev


def enclosed_volume(graph: RadialGraph) -> float:
    """Volume between the horizon and the graph."""
    per_dir = _radial_volume(graph.metric, graph.grid.omega, graph.rho)
    return float(np.sum((per_dir * graph.grid.weights).ravel()))


def isoperimetric_ratio(graph: RadialGraph) -> float:
    n = graph.metric.n
    vol = enclosed_volume(graph)
    if vol <= 0:
        raise DomainError("isoperimetric ratio undefined for zero enclosed volume")
    return area(graph) ** (n + 1) / vol**n


# -- coordinate spheres of prescribed volume / area ---------------------------

_REF_L = 16


def _sphere_functional(metric, kind, grid):
    grid = grid or SphericalGrid(_REF_L)

    def value_and_slope(r):
        sph = make_sphere(grid, metric, r)
        if kind == "volume":
            val = enclosed_volume(sph)
            slope = grid.integrate(_volume_density(metric, np.full(grid.shape, r), grid.omega) * r**metric.n)
        else:
            f = geometry(sph, eps_graph=-np.inf)
            val = f.area
            slope = f.integrate(f.H * f.chi)
        return val, slope

    return value_and_slope


def _invert_monotone(func, target, r_lo, f_lo, label, rtol=1e-12):
    if not target > f_lo:
        raise DomainError(f"target {label} {target:.6g} does not exceed its horizon value {f_lo:.6g}")
    hi = max(2.0 * r_lo, 1.0)
    f_hi, _ = func(hi)
    while f_hi < target:
        r_lo, f_lo = hi, f_hi
        hi *= 2.0
        f_hi, _ = func(hi)
    lo = r_lo
    r = 0.5 * (lo + hi)
    for _ in range(200):
        val, slope = func(r)
        if val > target:
            hi = r
        else:
            lo = r
        step = (val - target) / slope if slope > 0 else np.inf
        r_new = r - step
        if not (lo < r_new < hi):
            r_new = 0.5 * (lo + hi)
        if abs(r_new - r) <= rtol * r or (hi - lo) <= rtol * r:
            return float(r_new)
        r = r_new
    return float(r)


def sphere_of_volume(metric: AmbientMetric, V: float, grid: SphericalGrid | None = None) -> float:
    """Radius of the coordinate sphere enclosing volume ``V`` with the horizon."""
    func = _sphere_functional(metric, "volume", grid)
    return _invert_monotone(func, V, metric.horizon, 0.0, "volume")


def sphere_of_area(metric: AmbientMetric, target: float, grid: SphericalGrid | None = None) -> float:
    """Radius of the coordinate sphere of area ``target``."""
    func = _sphere_functional(metric, "area", grid)
    rh = metric.horizon
    # the horizon is minimal: its area bounds every coordinate sphere from below
    a_h = sphere_area(metric.m, rh, metric.n) if rh > 0 else 0.0
    if metric.perturbation is not None and rh > 0:
        a_h = func(rh * (1 + 1e-9))[0]
    return _invert_monotone(func, target, rh, a_h, "area")


def variation_check(graph: RadialGraph, psi, eps_fd: float = 1e-5):
    """Compare ``d/de Area(rho + e psi)`` by central differences with ``int H chi psi dmu``."""
    psi = np.asarray(psi, dtype=float)
    plus = graph.with_rho(graph.rho + eps_fd * psi)
    minus = graph.with_rho(graph.rho - eps_fd * psi)
    lhs = (area(plus) - area(minus)) / (2 * eps_fd)
    f = geometry(graph, eps_graph=-np.inf)
    rhs = f.integrate(f.H * psi * f.chi)
    return lhs, rhs


# -- snapshot files ------------------------------------------------------------

SNAPSHOT_HEADER = ("theta", "phi", "rho")


def write_snapshot(graph: RadialGraph, path) -> None:
    grid = graph.grid
    with open(path, "w", newline="") as fh:
        fh.write(",".join(SNAPSHOT_HEADER) + "\n")
        for j in range(grid.n_theta):
            for i in range(grid.n_phi):
                fh.write(f"{grid.theta[j]:.17g},{grid.phi[i]:.17g},{graph.rho[j, i]:.17g}\n")


def read_snapshot(path, metric: AmbientMetric) -> RadialGraph:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(h.strip() for h in header) != SNAPSHOT_HEADER:
            raise ValueError(f"{path}: expected header {','.join(SNAPSHOT_HEADER)}, got {','.join(header)}")
        rows = [tuple(float(v) for v in row) for row in reader if row]
    count = len(rows)
    # (L+1)(2L+2) = count
    L = int(round(np.sqrt(count / 2))) - 1
    if (L + 1) * (2 * L + 2) != count:
        raise ValueError(f"{path}: {count} rows do not form a Gauss-Legendre grid")
    grid = SphericalGrid(L)
    data = np.array(rows)
    theta = data[:, 0].reshape(grid.shape)[:, 0]
    if not np.allclose(theta, grid.theta, rtol=0, atol=1e-12):
        raise ValueError(f"{path}: colatitudes do not match the L={L} Gauss-Legendre nodes")
    return RadialGraph(grid, data[:, 2].reshape(grid.shape), metric)
