"""Gauss-Legendre x equispaced grid on S^2 with a spherical-harmonic transform.

Colatitudes are the ``L + 1`` Gauss-Legendre nodes in ``cos(theta)``
(ordered north to south), longitudes ``2L + 2`` equispaced points. With this
grid the analysis/synthesis pair is exact for fields of degree <= L, and the
quadrature is exact for products of two such fields.

Coefficients are stored complex, ``a[l, m]`` for ``0 <= m <= l <= L``, w.r.t.
the orthonormal ``Y_lm = Pbar_lm(theta) exp(i m phi)`` without the
Condon-Shortley phase; a real field is ``sum_l a_l0 Y_l0 + 2 Re sum_{m>0} a_lm Y_lm``.
"""

from __future__ import annotations

from functools import cached_property, lru_cache

import numpy as np
from scipy.special import roots_legendre

__all__ = ["SphericalGrid", "legendre_table", "real_harmonic", "real_harmonic_max"]


def legendre_table(L: int, theta, derivatives: bool = True):
    """Normalised associated Legendre functions and their theta derivatives.

    Returns ``P, dP, d2P`` of shape ``(L+1 [m], len(theta), L+1 [l])`` with
    ``int |Pbar_lm|^2 sin(theta) dtheta dphi = 1``. Zero where ``l < m``.
    The derivatives use ``sin dP = l cos P_l - c_lm P_{l-1}`` and the
    Legendre equation, so ``theta`` must avoid the poles.
    """
    theta = np.asarray(theta, dtype=float)
    x = np.cos(theta)
    s = np.sin(theta)
    nt = theta.size
    P = np.zeros((L + 1, nt, L + 1))
    pmm = np.full(nt, np.sqrt(1.0 / (4 * np.pi)))
    for m in range(L + 1):
        if m > 0:
            pmm = np.sqrt((2 * m + 1) / (2.0 * m)) * s * pmm
        P[m, :, m] = pmm
        if m < L:
            P[m, :, m + 1] = np.sqrt(2 * m + 3.0) * x * pmm
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1) ** 2 - 1))
            P[m, :, l] = a * (x * P[m, :, l - 1] - b * P[m, :, l - 2])
    if not derivatives:
        return P

    dP = np.zeros_like(P)
    ls = np.arange(L + 1)
    for m in range(L + 1):
        for l in range(m, L + 1):
            term = l * x * P[m, :, l]
            if l > m:
                c = np.sqrt((2.0 * l + 1) * (l - m) * (l + m) / (2.0 * l - 1))
                term = term - c * P[m, :, l - 1]
            dP[m, :, l] = term / s
    cot = x / s
    mm = np.arange(L + 1)[:, None, None]
    d2P = -cot[None, :, None] * dP + (
        mm**2 / (s * s)[None, :, None] - (ls * (ls + 1))[None, None, :]
    ) * P
    return P, dP, d2P


def gauss_legendre(n: int):
    """Gauss-Legendre nodes (descending) and weights on [-1, 1].

    scipy's weights carry ~1e-15 relative bias, which shows up as noise in the
    transform of constants; one Newton polish in extended precision removes it.
    """
    x0, _ = roots_legendre(n)
    x = x0.astype(np.longdouble)
    for _ in range(3):
        p0, p1 = np.ones_like(x), x.copy()
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp = n * (x * p1 - p0) / (x * x - 1)
        x = x - p1 / dp
    p0, p1 = np.ones_like(x), x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - 1)
    w = 2 / ((1 - x * x) * dp * dp)
    x = np.asarray(x, dtype=float)[::-1]
    w = np.asarray(w, dtype=float)[::-1]
    # exact reflection symmetry about the equator
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x.copy(), w.copy()


@lru_cache(maxsize=None)
def _grid_tables(L: int):
    x, w = gauss_legendre(L + 1)
    theta = np.arccos(x)
    P, dP, d2P = legendre_table(L, theta)
    return theta, w, P, dP, d2P


class SphericalGrid:
    """Spectral grid of band limit ``L`` on the unit sphere."""

    def __init__(self, L: int):
        if int(L) != L or L < 2:
            raise ValueError(f"band limit must be an integer >= 2, got {L}")
        self.L = int(L)
        theta, w, P, dP, d2P = _grid_tables(self.L)
        self.theta = theta
        self.gl_weights = w
        self.n_theta = self.L + 1
        self.n_phi = 2 * self.L + 2
        self.phi = 2 * np.pi * np.arange(self.n_phi) / self.n_phi
        self._P, self._dP, self._d2P = P, dP, d2P
        self._Pt = np.ascontiguousarray(np.swapaxes(P, 1, 2))
        self.weights = np.outer(w, np.full(self.n_phi, 2 * np.pi / self.n_phi))
        self.TH, self.PH = np.meshgrid(self.theta, self.phi, indexing="ij")
        self._m = np.arange(self.L + 1)
        self._ls = np.arange(self.L + 1)

    def __repr__(self):
        return f"SphericalGrid(L={self.L})"

    def __eq__(self, other):
        return isinstance(other, SphericalGrid) and other.L == self.L

    def __hash__(self):
        return hash(("SphericalGrid", self.L))

    @property
    def shape(self):
        return (self.n_theta, self.n_phi)

    @property
    def size(self):
        return self.n_theta * self.n_phi

    @cached_property
    def omega(self):
        """Unit radial vectors, shape ``(n_theta, n_phi, 3)``."""
        st, ct = np.sin(self.TH), np.cos(self.TH)
        sp, cp = np.sin(self.PH), np.cos(self.PH)
        return np.stack([st * cp, st * sp, ct], axis=-1)

    @cached_property
    def omega_derivs(self):
        """``(w_t, w_p, w_tt, w_tp, w_pp)`` partials of the radial unit vector."""
        st, ct = np.sin(self.TH), np.cos(self.TH)
        sp, cp = np.sin(self.PH), np.cos(self.PH)
        z = np.zeros_like(st)
        w_t = np.stack([ct * cp, ct * sp, -st], axis=-1)
        w_p = np.stack([-st * sp, st * cp, z], axis=-1)
        w_tt = -self.omega
        w_tp = np.stack([-ct * sp, ct * cp, z], axis=-1)
        w_pp = np.stack([-st * cp, -st * sp, z], axis=-1)
        return w_t, w_p, w_tt, w_tp, w_pp

    def integrate(self, f):
        """Quadrature of a node field against the round measure ``d omega``."""
        return float(np.sum(np.asarray(f) * self.weights))

    # -- transforms -------------------------------------------------------

    def analyze(self, f):
        """Node values -> coefficients ``a[l, m]``."""
        f = np.asarray(f, dtype=float)
        X = np.fft.rfft(f, axis=1)[:, : self.L + 1] / self.n_phi
        # a_lm = 2 pi sum_j w_j Pbar_lm(theta_j) X_m(theta_j)
        Xw = (2 * np.pi) * (self.gl_weights[:, None] * X)
        # (m, l, j) @ (m, j, 1)
        return (self._Pt @ Xw.T[:, :, None])[:, :, 0].T

    def _fourier(self, table, a):
        # G_m(theta_j) = sum_l a_lm T_lm(theta_j)
        return (table @ a.T[:, :, None])[:, :, 0].T

    def _to_nodes(self, G):
        X = np.zeros((self.n_theta, self.n_phi // 2 + 1), dtype=complex)
        X[:, : self.L + 1] = G * self.n_phi
        return np.fft.irfft(X, n=self.n_phi, axis=1)

    def synthesize(self, a):
        return self._to_nodes(self._fourier(self._P, a))

    def derivatives(self, f, order: int = 2):
        """Spectral partials of a node field.

        Returns ``(f_t, f_p)`` for ``order=1`` and
        ``(f_t, f_p, f_tt, f_tp, f_pp)`` for ``order=2``.
        """
        a = self.analyze(f)
        return self.derivatives_from_coeffs(a, order=order)

    def derivatives_from_coeffs(self, a, order: int = 2):
        im = 1j * self._m
        G = self._fourier(self._P, a)
        Gt = self._fourier(self._dP, a)
        f_t = self._to_nodes(Gt)
        f_p = self._to_nodes(im * G)
        if order == 1:
            return f_t, f_p
        f_tt = self._to_nodes(self._fourier(self._d2P, a))
        f_tp = self._to_nodes(im * Gt)
        f_pp = self._to_nodes(-(self._m**2) * G)
        return f_t, f_p, f_tt, f_tp, f_pp

    def truncate(self, f, lmax: int):
        """Project a node field onto degrees ``<= lmax``."""
        a = self.analyze(f)
        a[self._ls > lmax, :] = 0.0
        return self.synthesize(a)

    def degree_spectrum(self, f):
        """L2 power per degree of a node field."""
        a = self.analyze(f)
        p = np.abs(a) ** 2
        p[:, 1:] *= 2
        return p.sum(axis=1)

    def evaluate(self, a, theta, phi):
        """Evaluate a coefficient array at arbitrary angles (vectorised)."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        P = legendre_table(self.L, theta.ravel(), derivatives=False)
        G = np.einsum("mjl,lm->jm", P, a)
        ph = phi.ravel()
        wave = np.exp(1j * np.outer(ph, self._m))
        vals = G[:, 0].real + 2 * np.sum((G[:, 1:] * wave[:, 1:]).real, axis=1)
        return vals.reshape(theta.shape)

    def resample(self, f, other: "SphericalGrid"):
        """Spectrally interpolate a node field to another grid (truncating or padding)."""
        a = self.analyze(f)
        b = np.zeros((other.L + 1, other.L + 1), dtype=complex)
        k = min(self.L, other.L) + 1
        b[:k, :k] = a[:k, :k]
        return other.synthesize(b)

    def min_node_spacing(self):
        """Resolution length of the unit-sphere grid, ``1/sqrt(L(L+1))``."""
        return 1.0 / np.sqrt(self.L * (self.L + 1.0))

    def real_harmonic(self, l: int, m: int, normalization: str = "orthonormal"):
        return real_harmonic(l, m, self.TH, self.PH, normalization=normalization)

    def real_harmonic_derivs(self, l: int, m: int):
        """Node values of the orthonormal real harmonic and its theta/phi partials."""
        if l > self.L:
            raise ValueError(f"degree {l} exceeds band limit {self.L}")
        am = abs(m)
        P = self._P[am, :, l][:, None]
        dP = self._dP[am, :, l][:, None]
        if m == 0:
            return (np.broadcast_to(P, self.shape).copy(),
                    np.broadcast_to(dP, self.shape).copy(),
                    np.zeros(self.shape))
        c = np.sqrt(2.0)
        if m > 0:
            ang, dang = np.cos(am * self.PH), -am * np.sin(am * self.PH)
        else:
            ang, dang = np.sin(am * self.PH), am * np.cos(am * self.PH)
        return c * P * ang, c * dP * ang, c * P * dang


def real_harmonic(l: int, m: int, theta, phi, normalization: str = "orthonormal"):
    """Real spherical harmonic of degree ``l`` and signed order ``m``.

    ``m > 0`` uses ``cos(m phi)``, ``m < 0`` uses ``sin(|m| phi)``.
    ``normalization="max"`` rescales so that ``max |Y| = 1`` over the sphere.
    """
    if abs(m) > l or l < 0:
        raise ValueError(f"invalid harmonic indices (l={l}, m={m})")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    am = abs(m)
    P = legendre_table(l, theta.ravel(), derivatives=False)
    p = P[am, :, l].reshape(theta.shape)
    if m == 0:
        y = p
    elif m > 0:
        y = np.sqrt(2.0) * p * np.cos(am * phi)
    else:
        y = np.sqrt(2.0) * p * np.sin(am * phi)
    if normalization == "max":
        y = y / real_harmonic_max(l, m)
    elif normalization != "orthonormal":
        raise ValueError(f"unknown normalization {normalization!r}")
    return y


@lru_cache(maxsize=None)
def real_harmonic_max(l: int, m: int) -> float:
    """``max |Y_lm|`` over the sphere for the orthonormal real harmonic."""
    from scipy.optimize import minimize_scalar

    am = abs(m)
    theta = np.linspace(0.0, np.pi, 4001)
    P = legendre_table(l, theta, derivatives=False)
    vals = np.abs(P[am, :, l])
    k = int(np.argmax(vals))
    best = float(vals[k])
    lo, hi = theta[max(k - 1, 0)], theta[min(k + 1, theta.size - 1)]
    if 0 < k < theta.size - 1:
        res = minimize_scalar(
            lambda t: -abs(legendre_table(l, np.array([t]), derivatives=False)[am, 0, l]),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-13},
        )
        best = max(best, -float(res.fun))
    return best * (np.sqrt(2.0) if m != 0 else 1.0)
