"""Schwarzschild and asymptotically Schwarzschild ambient metrics.

The metric is evaluated in Cartesian coordinates ``y`` of R^{n+1}:

    g_ab(y) = phi(y)^(4/(n-1)) delta_ab + P_ab(y),   phi = 1 + m / (2 r^(n-1)).

All functions are vectorised over leading axes: a point array of shape
``(..., n+1)`` yields tensors of shape ``(..., n+1, n+1[, ...])``.
Derivative indices always come last, e.g. ``dg[..., a, b, c] = d_c g_ab``
and ``gamma[..., a, b, c] = Gamma^a_bc``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, StencilError

__all__ = [
    "AmbientMetric",
    "MetricJet",
    "Perturbation",
    "conformal_factor",
    "horizon_radius",
    "metric_jet",
    "metric_tensor",
    "christoffels",
    "ricci",
    "quadrupole",
    "named_perturbation",
]

# relative step of the 4th-order stencil used for d(Gamma) of the perturbation
FD_REL_STEP = 1e-5


@dataclass(frozen=True)
class Perturbation:
    """Additive metric perturbation ``P_ab`` with analytic derivatives.

    ``func(points, order)`` must return ``(P, dP, d2P)`` with shapes
    ``(..., N, N)``, ``(..., N, N, N)`` and ``(..., N, N, N, N)`` where the
    derivative indices come last; with ``order=0`` it may return ``P`` alone. ``decay`` is the declared order ``k`` in
    ``|P| = O(r^-k)``. ``breakpoints`` lists radii where the perturbation is
    only finitely smooth; radial quadratures split there.
    """

    name: str
    func: Callable[[np.ndarray], tuple]
    decay: float
    breakpoints: tuple = ()
    params: dict = field(default_factory=dict)

    def __call__(self, points, order: int = 2):
        return self.func(np.asarray(points, dtype=float), order)


@dataclass(frozen=True)
class AmbientMetric:
    """Ambient space of dimension ``n + 1``; ``m = 0`` without perturbation is flat space."""

    n: int = 2
    m: float = 0.0
    perturbation: Optional[Perturbation] = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"hypersurface dimension n must be an integer >= 2, got {self.n}")
        if not np.isfinite(self.m) or self.m < 0:
            raise DomainError(f"mass must be finite and >= 0, got {self.m}")

    @property
    def dim(self) -> int:
        return self.n + 1

    @property
    def conformal_power(self) -> float:
        return 4.0 / (self.n - 1)

    @property
    def horizon(self) -> float:
        return horizon_radius(self)

    @property
    def is_flat(self) -> bool:
        return self.m == 0 and self.perturbation is None

    def describe(self) -> dict:
        pert = None
        if self.perturbation is not None:
            pert = {"id": self.perturbation.name, **self.perturbation.params}
        return {"n": self.n, "m": self.m, "perturbation": pert}


@dataclass(frozen=True)
class MetricJet:
    point: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    d2g: Optional[np.ndarray] = None


def horizon_radius(metric: AmbientMetric) -> float:
    """Coordinate radius ``(m/2)^(1/(n-1))`` of the horizon (0 in flat space)."""
    if metric.m == 0:
        return 0.0
    return (metric.m / 2.0) ** (1.0 / (metric.n - 1))


# ---------------------------------------------------------------------------
# scalar jets (value, gradient, Hessian) for closed-form derivatives


def _radius(points):
    return np.sqrt(np.sum(points * points, axis=-1))


def _power_jet(points, k):
    """Jet of r^k."""
    dim = points.shape[-1]
    r2 = np.sum(points * points, axis=-1)
    f = r2 ** (k / 2)
    fk2 = k * r2 ** ((k - 2) / 2)
    grad = fk2[..., None] * points
    hess = fk2[..., None, None] * np.eye(dim) + (
        k * (k - 2) * r2 ** ((k - 4) / 2)
    )[..., None, None] * (points[..., :, None] * points[..., None, :])
    return f, grad, hess


def _radial_jet(points, f, df, d2f):
    """Jet of a radial function given its values and r-derivatives."""
    dim = points.shape[-1]
    r = _radius(points)
    u = points / r[..., None]
    uu = u[..., :, None] * u[..., None, :]
    grad = df[..., None] * u
    hess = d2f[..., None, None] * uu + (df / r)[..., None, None] * (np.eye(dim) - uu)
    return f, grad, hess


def _jet_product(a, b):
    fa, ga, ha = a
    fb, gb, hb = b
    f = fa * fb
    g = ga * fb[..., None] + fa[..., None] * gb
    h = (
        ha * fb[..., None, None]
        + fa[..., None, None] * hb
        + ga[..., :, None] * gb[..., None, :]
        + gb[..., :, None] * ga[..., None, :]
    )
    return f, g, h


def _jet_lincomb(*terms):
    f = sum(c * t[0] for c, t in terms)
    g = sum(c * t[1] for c, t in terms)
    h = sum(c * t[2] for c, t in terms)
    return f, g, h


def _check_points(metric, points, clearance=0.0):
    points = np.asarray(points, dtype=float)
    if points.shape[-1] != metric.dim:
        raise DomainError(f"points must have {metric.dim} Cartesian components, got shape {points.shape}")
    r = _radius(points)
    rh = metric.horizon
    if np.any(~np.isfinite(r)) or np.any(r <= 0):
        raise DomainError("metric evaluated at the coordinate origin or at a non-finite point")
    if np.any(r <= rh + clearance):
        worst = float(np.min(r))
        raise DomainError(f"point at radius {worst:.6g} is inside or on the horizon r_h = {rh:.6g}")
    return points


def conformal_factor(metric: AmbientMetric, points):
    """Return ``(phi, dphi, d2phi)`` for ``phi = 1 + m / (2 r^(n-1))``."""
    points = np.asarray(points, dtype=float)
    r = _radius(points)
    if np.any(r <= 0) or np.any(~np.isfinite(r)):
        raise DomainError("conformal factor is undefined at the coordinate origin")
    n = metric.n
    f, g, h = _power_jet(points, 1.0 - n)
    c = metric.m / 2.0
    return 1.0 + c * f, c * g, c * h


def _conformal_scale_jet(metric, points):
    """Jet of psi = phi^(4/(n-1)), the conformal metric coefficient."""
    phi, dphi, d2phi = conformal_factor(metric, points)
    p = metric.conformal_power
    psi = phi**p
    dpsi = (p * phi ** (p - 1))[..., None] * dphi
    d2psi = (p * (p - 1) * phi ** (p - 2))[..., None, None] * (
        dphi[..., :, None] * dphi[..., None, :]
    ) + (p * phi ** (p - 1))[..., None, None] * d2phi
    return psi, dpsi, d2psi


def metric_tensor(metric: AmbientMetric, points) -> np.ndarray:
    """Metric components only (no derivatives)."""
    points = _check_points(metric, points)
    phi = 1.0 + metric.m / (2.0 * _radius(points) ** (metric.n - 1))
    g = (phi**metric.conformal_power)[..., None, None] * np.eye(metric.dim)
    if metric.perturbation is not None:
        g = g + metric.perturbation(points, order=0)
    return g


def metric_jet(metric: AmbientMetric, point, order: int = 1) -> MetricJet:
    """Metric and its first (and optionally second) Cartesian partials."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    points = _check_points(metric, point)
    dim = metric.dim
    eye = np.eye(dim)
    psi, dpsi, d2psi = _conformal_scale_jet(metric, points)
    g = psi[..., None, None] * eye
    dg = eye[:, :, None] * dpsi[..., None, None, :]
    d2g = None
    if order == 2:
        d2g = eye[:, :, None, None] * d2psi[..., None, None, :, :]
    if metric.perturbation is not None:
        P, dP, d2P = metric.perturbation(points)
        g = g + P
        dg = dg + dP
        if order == 2:
            d2g = d2g + d2P
    return MetricJet(point=points, g=g, dg=dg, d2g=d2g)


def _gamma_from_jet(g, dg):
    ginv = np.linalg.inv(g)
    # T_dbc = d_b g_dc + d_c g_db - d_d g_bc
    t = np.swapaxes(dg, -1, -2) + dg - np.moveaxis(dg, -1, -3)
    return 0.5 * np.einsum("...ad,...dbc->...abc", ginv, t)


def christoffels(metric: AmbientMetric, point) -> np.ndarray:
    """Christoffel symbols ``Gamma^a_bc`` of the full metric."""
    jet = metric_jet(metric, point, order=1)
    gamma = _gamma_from_jet(jet.g, jet.dg)
    if not np.all(np.isfinite(gamma)):
        raise FloatingPointError("singular metric matrix while forming Christoffel symbols")
    return gamma


def metric_and_connection(metric: AmbientMetric, points):
    """Metric, its inverse and a callable ``(X, Y) -> Gamma(X, Y)`` at ``points``.

    Uses the closed-form conformal connection when there is no perturbation.
    """
    points = _check_points(metric, points)
    if metric.perturbation is None:
        phi, dphi, _ = conformal_factor(metric, points)
        p = metric.conformal_power
        psi = phi**p
        df = (0.5 * p) * dphi / phi[..., None]
        eye = np.eye(metric.dim)
        g = psi[..., None, None] * eye
        g_inv = (1.0 / psi)[..., None, None] * eye

        def action(X, Y):
            xf = np.sum(X * df[..., None, :], axis=-1)
            yf = np.sum(Y * df[..., None, :], axis=-1)
            xy = np.sum(X * Y, axis=-1)
            return X * yf[..., None] + Y * xf[..., None] - xy[..., None] * df[..., None, :]

        return g, g_inv, action
    jet = metric_jet(metric, points, order=1)
    gamma = _gamma_from_jet(jet.g, jet.dg)
    g_inv = np.linalg.inv(jet.g)

    def action(X, Y):
        return np.einsum("...abc,...kb,...kc->...ka", gamma, X, Y, optimize=True)

    return jet.g, g_inv, action


def _log_phi_jet(metric, points):
    """Gradient and Hessian of f = (2/(n-1)) log(phi), where g_conf = e^{2f} delta."""
    phi, dphi, d2phi = conformal_factor(metric, points)
    c = metric.conformal_power / 2.0
    df = c * dphi / phi[..., None]
    d2f = c * (
        d2phi / phi[..., None, None]
        - dphi[..., :, None] * dphi[..., None, :] / (phi**2)[..., None, None]
    )
    return df, d2f


def _conformal_gamma(metric, points):
    df, d2f = _log_phi_jet(metric, points)
    eye = np.eye(metric.dim)
    gamma = (
        eye[:, :, None] * df[..., None, None, :]
        + eye[:, None, :] * df[..., None, :, None]
        - eye[None, :, :] * df[..., :, None, None]
    )
    dgamma = (
        eye[:, :, None, None] * d2f[..., None, None, :, :]
        + eye[:, None, :, None] * d2f[..., None, :, None, :]
        - eye[None, :, :, None] * d2f[..., :, None, None, :]
    )
    return gamma, dgamma


def ricci(metric: AmbientMetric, point) -> np.ndarray:
    """Ricci tensor ``Ric_bc``.

    d(Gamma) of the conformal part is exact; the perturbation's contribution
    is differentiated with a 4th-order central stencil of step 1e-5 r.
    """
    points = _check_points(metric, point)
    gamma_c, dgamma = _conformal_gamma(metric, points)
    if metric.perturbation is None:
        gamma = gamma_c
    else:
        r = _radius(points)
        h = FD_REL_STEP * r
        rh = metric.horizon
        if np.any(r - 2 * h <= rh):
            need = rh / (1 - 2 * FD_REL_STEP)
            raise StencilError(
                f"Ricci stencil needs radius > {need:.12g} (horizon {rh:.6g} plus 2 steps), "
                f"got {float(np.min(r)):.12g}"
            )
        gamma = christoffels(metric, points)

        def pert_gamma(p):
            return christoffels(metric, p) - _conformal_gamma(metric, p)[0]

        dim = metric.dim
        parts = []
        for d in range(dim):
            e = np.zeros(dim)
            e[d] = 1.0
            step = h[..., None] * e
            num = (
                -pert_gamma(points + 2 * step)
                + 8 * pert_gamma(points + step)
                - 8 * pert_gamma(points - step)
                + pert_gamma(points - 2 * step)
            )
            parts.append(num / (12 * h)[..., None, None, None])
        dgamma = dgamma + np.stack(parts, axis=-1)
    ric = (
        np.einsum("...abca->...bc", dgamma)
        - np.einsum("...abac->...bc", dgamma)
        + np.einsum("...aad,...dbc->...bc", gamma, gamma)
        - np.einsum("...acd,...dba->...bc", gamma, gamma)
    )
    return 0.5 * (ric + np.swapaxes(ric, -1, -2))


# ---------------------------------------------------------------------------
# built-in perturbations


def _smoothstep_jet(x):
    x = np.clip(x, 0.0, 1.0)
    s = x**3 * (10 - 15 * x + 6 * x * x)
    ds = 30 * x**2 * (1 - x) ** 2
    d2s = 60 * x * (1 - x) * (1 - 2 * x)
    return s, ds, d2s


def quadrupole(eps: float, n: int = 2, m: float = 0.0) -> Perturbation:
    """``P_ab = eps r^-(n+1) Y20(y/r) delta_ab`` with ``Y20 = (3 cos^2 - 1)/2``.

    Switched off smoothly (C^2 quintic step) between the horizon and twice
    the horizon radius; unaffected in flat space.
    """
    dim = n + 1
    rh = horizon_radius(AmbientMetric(n=n, m=m))

    def func(points, order=2):
        if order == 0:
            r = _radius(points)
            q = 0.5 * (3 * points[..., -1] ** 2 * r ** -(n + 3.0) - r ** -(n + 1.0))
            if rh > 0:
                q = q * _smoothstep_jet((r - rh) / rh)[0]
            return eps * q[..., None, None] * np.eye(dim)
        z = points[..., -1]
        ez = np.zeros(dim)
        ez[-1] = 1.0
        z2 = (z * z, 2 * z[..., None] * ez, np.broadcast_to(2 * np.outer(ez, ez), z.shape + (dim, dim)))
        # Y20(y/r) r^-(n+1) = (3 z^2 r^-(n+3) - r^-(n+1)) / 2
        shape = _jet_lincomb(
            (1.5, _jet_product(z2, _power_jet(points, -(n + 3.0)))),
            (-0.5, _power_jet(points, -(n + 1.0))),
        )
        if rh > 0:
            r = _radius(points)
            s, ds, d2s = _smoothstep_jet((r - rh) / rh)
            cut = _radial_jet(points, s, ds / rh, d2s / rh**2)
            shape = _jet_product(cut, shape)
        q, dq, d2q = shape
        eye = np.eye(dim)
        P = eps * q[..., None, None] * eye
        dP = eps * eye[:, :, None] * dq[..., None, None, :]
        d2P = eps * eye[:, :, None, None] * d2q[..., None, None, :, :]
        return P, dP, d2P

    bps = (rh, 2 * rh) if rh > 0 else ()
    return Perturbation(
        name="quadrupole", func=func, decay=n + 1.0, breakpoints=bps, params={"epsilon": eps}
    )


_QUAD_RE = re.compile(r"^\s*quadrupole\s*\(\s*([-+0-9.eE]+)\s*\)\s*$")


def named_perturbation(ident, n: int = 2, m: float = 0.0) -> Optional[Perturbation]:
    """Resolve ``"none"``, ``"quadrupole(eps)"`` or ``{"id": ..., "epsilon": ...}``."""
    if ident is None:
        return None
    if isinstance(ident, dict):
        kind = ident.get("id", "none")
        if kind == "none":
            return None
        if kind == "quadrupole":
            return quadrupole(float(ident["epsilon"]), n=n, m=m)
        raise DomainError(f"unknown perturbation id {kind!r}")
    if ident.strip() == "none":
        return None
    match = _QUAD_RE.match(ident)
    if match:
        return quadrupole(float(match.group(1)), n=n, m=m)
    raise DomainError(f"unknown perturbation id {ident!r}")
