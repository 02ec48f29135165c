"""Logarithmic radial meshes, Newton multipole potentials and Hankel transforms.

All radial integrals use the measure r^2 dr.  Mesh nodes are uniform in
t = ln r, so the trapezoid rule in t is spectrally accurate for integrands
that decay at both ends of the mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import spherical_jn

__all__ = [
    "RadialMesh",
    "multipole_potential",
    "multipole_pairing",
    "hankel_matrix",
    "hankel_transform",
]


def _end_corrections(r: np.ndarray, w: np.ndarray, n_fix: int = 4) -> np.ndarray:
    """Adjust the last ``n_fix`` weights so r^k r^2 integrates exactly, k < n_fix."""
    w = w.copy()
    idx = np.arange(len(r) - n_fix, len(r))
    a, b = r[0], r[-1]
    # Scaled variable keeps the Vandermonde system well conditioned.
    scale = r[-1] - r[idx[0]]
    x = (r[idx] - b) / scale
    vander = np.vstack([x**k for k in range(n_fix)])
    rhs = np.empty(n_fix)
    for k in range(n_fix):
        # exact integral of ((r - b)/scale)^k r^2 over [a, b]
        poly = np.polynomial.Polynomial([-b / scale, 1.0 / scale]) ** k
        poly = poly * np.polynomial.Polynomial([0.0, 0.0, 1.0])
        anti = poly.integ()
        rhs[k] = anti(b) - anti(a) - np.dot(w, ((r - b) / scale) ** k)
    w[idx] += np.linalg.solve(vander, rhs)
    return w


@dataclass(frozen=True, eq=False)
class RadialMesh:
    """Nodes ``r`` (uniform in ln r) with weights ``w`` for integrals f(r) r^2 dr."""

    r: np.ndarray
    w: np.ndarray
    step: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def log(cls, r_min: float = 1e-4, r_max: float = 40.0, n: int = 600) -> "RadialMesh":
        if not (0 < r_min < r_max) or n < 16:
            raise ValueError("need 0 < r_min < r_max and at least 16 nodes")
        t = np.linspace(np.log(r_min), np.log(r_max), n)
        h = t[1] - t[0]
        r = np.exp(t)
        w = h * r**3
        w[0] *= 0.5
        w[-1] *= 0.5
        return cls(r, _end_corrections(r, w), h)

    def __len__(self) -> int:
        return len(self.r)

    @property
    def t(self) -> np.ndarray:
        return np.log(self.r)

    def scaled(self, factor: float) -> "RadialMesh":
        """Mesh for the dilation r -> factor * r (weights pick up factor^3)."""
        return RadialMesh(self.r * factor, self.w * factor**3, self.step)

    def integrate(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f) @ self.w

    def inner(self, f: np.ndarray, g: np.ndarray) -> complex:
        return np.sum(np.conj(f) * g * self.w)

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(np.real(self.inner(f, f))))

    def derivative_matrix(self) -> np.ndarray:
        """Fourth-order finite differences in ln r, converted to d/dr."""
        mat = self._cache.get("d1")
        if mat is None:
            n, h = len(self.r), self.step
            mat = np.zeros((n, n))
            for i in range(2, n - 2):
                mat[i, i - 2 : i + 3] = [1.0, -8.0, 0.0, 8.0, -1.0]
            left0 = [-25.0, 48.0, -36.0, 16.0, -3.0]
            left1 = [-3.0, -10.0, 18.0, -6.0, 1.0]
            mat[0, :5] = left0
            mat[1, :5] = left1
            mat[-1, -5:] = [-c for c in left0[::-1]]
            mat[-2, -5:] = [-c for c in left1[::-1]]
            mat /= 12.0 * h
            mat /= self.r[:, None]
            self._cache["d1"] = mat
        return mat

    def derivative(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f) @ self.derivative_matrix().T

    def kinetic_form(self, centrifugal: float = 0.0) -> np.ndarray:
        """Symmetric PSD A with f^T A f ~ int (f'^2 + c f^2 / r^2) r^2 dr.

        Derivatives are taken at the midpoints of the ln r grid with six-point
        stencils, so A is a Gram matrix and has no odd-even null modes.
        """
        key = ("kin", float(centrifugal))
        a = self._cache.get(key)
        if a is None:
            n, h, width = len(self.r), self.step, 6
            grad = np.zeros((n - 1, n))
            for i in range(n - 1):
                lo = min(max(i - width // 2 + 1, 0), n - width)
                offs = np.arange(lo, lo + width) - (i + 0.5)
                rhs = np.zeros(width)
                rhs[1] = 1.0
                grad[i, lo : lo + width] = np.linalg.solve(np.vander(offs, width, increasing=True).T, rhs)
            grad /= h
            r_mid = np.sqrt(self.r[1:] * self.r[:-1])
            a = grad.T @ ((h * r_mid)[:, None] * grad)
            if centrifugal:
                a = a + np.diag(centrifugal * self.w / self.r**2)
            self._cache[key] = a
        return a

    def coulomb_matrix(self, ell: int) -> np.ndarray:
        """Symmetric M with rho1^H M rho2 = int conj(rho1) V_l[rho2] r^2 dr (symmetrized)."""
        key = ("coulomb", int(ell))
        mat = self._cache.get(key)
        if mat is None:
            k = multipole_potential(self, np.eye(len(self.r)), ell).T
            wk = self.w[:, None] * k
            mat = 0.5 * (wk + wk.T)
            self._cache[key] = mat
        return mat

    def cumulative(self, g: np.ndarray) -> np.ndarray:
        """Running integral of g(r) dr (no r^2 factor) from the first node."""
        g = np.asarray(g)
        t = self.t
        if np.iscomplexobj(g):
            return self.cumulative(g.real) + 1j * self.cumulative(g.imag)
        spline = CubicSpline(t, g * self.r, axis=-1)
        out = spline.antiderivative()(t)
        return out - out[..., :1]

    def interpolate(self, f: np.ndarray, r_new: np.ndarray) -> np.ndarray:
        """Cubic interpolation in ln r; zero outside the mesh."""
        r_new = np.asarray(r_new, dtype=float)
        out = np.zeros(r_new.shape + np.shape(f)[:-1], dtype=np.result_type(f, float))
        inside = (r_new >= self.r[0]) & (r_new <= self.r[-1])
        if np.any(inside):
            f = np.asarray(f)
            if np.iscomplexobj(f):
                vals = (CubicSpline(self.t, f.real, axis=-1)(np.log(r_new[inside]))
                        + 1j * CubicSpline(self.t, f.imag, axis=-1)(np.log(r_new[inside])))
            else:
                vals = CubicSpline(self.t, f, axis=-1)(np.log(r_new[inside]))
            out[inside] = np.moveaxis(vals, -1, 0)
        return out


def multipole_potential(mesh: RadialMesh, rho: np.ndarray, ell: int) -> np.ndarray:
    """Radial factor of the potential of rho(r) Y_lm.

    Returns V with r^{-l-1} int_0^r s^{l+2} rho + r^l int_r^inf s^{1-l} rho, so the
    full potential is 4 pi / (2l + 1) * V(r) Y_lm.
    """
    r = mesh.r
    inner = mesh.cumulative(rho * r ** (ell + 2))
    outer_c = mesh.cumulative(rho * r ** (1 - ell))
    outer = outer_c[..., -1:] - outer_c
    return r ** (-ell - 1) * inner + r**ell * outer


def multipole_pairing(mesh: RadialMesh, rho1: np.ndarray, rho2: np.ndarray, ell: int) -> complex:
    """Hermitian Coulomb pairing of two l-pole radial densities (with 4 pi/(2l+1))."""
    v2 = multipole_potential(mesh, rho2, ell)
    v1 = multipole_potential(mesh, rho1, ell)
    x = mesh.integrate(np.conj(rho1) * v2)
    y = mesh.integrate(np.conj(rho2) * v1)
    return 4.0 * np.pi / (2 * ell + 1) * 0.5 * (x + np.conj(y))


@lru_cache(maxsize=24)
def _hankel_cached(ell: int, p_key: bytes, r_key: bytes, w_key: bytes) -> np.ndarray:
    p = np.frombuffer(p_key)
    r = np.frombuffer(r_key)
    w = np.frombuffer(w_key)
    return np.sqrt(2.0 / np.pi) * spherical_jn(ell, np.outer(p, r)) * w


def hankel_matrix(ell: int, p: np.ndarray, mesh: RadialMesh) -> np.ndarray:
    """Matrix H with (H f)(p) = sqrt(2/pi) int f(r) j_l(p r) r^2 dr."""
    p = np.ascontiguousarray(p, dtype=float)
    return _hankel_cached(int(ell), p.tobytes(), mesh.r.tobytes(), mesh.w.tobytes())


def hankel_transform(f: np.ndarray, ell: int, src: RadialMesh, dst: RadialMesh) -> np.ndarray:
    """Order-l spherical Bessel transform from ``src`` nodes to ``dst`` nodes.

    The transform is its own inverse, so the same call maps momentum profiles
    back to position space.
    """
    return hankel_matrix(ell, dst.r, src) @ np.asarray(f)
