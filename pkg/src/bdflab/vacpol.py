"""Vacuum response to a finite-rank state on a truncated basis.

gamma_vac = chi_(-inf,0)(D0 + Y) - P0_-, where Y is the mean-field
perturbation of Q.  It is computed by diagonalization and, order by order,
by the resolvent integral over the imaginary axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dressing import NonConvergence
from .galerkin import TruncatedBasis

__all__ = [
    "GapClosure",
    "CauchyTermSet",
    "perturbation",
    "vacuum_projector",
    "cauchy_term",
    "cauchy_terms",
    "first_order_exact",
    "kinetic_estimate",
    "hs_norm",
]


class GapClosure(RuntimeError):
    """The perturbed operator has an eigenvalue too close to zero."""


def hs_norm(x: np.ndarray) -> float:
    return float(np.linalg.norm(x))


def perturbation(q: np.ndarray, basis: TruncatedBasis, alpha: float | None = None,
                 extra: np.ndarray | None = None) -> np.ndarray:
    """Y = alpha (rho_Q * |x|^-1 - R_Q) plus an optional additive term (e.g. 2 eta Gamma)."""
    alpha = basis.dispersion.alpha if alpha is None else alpha
    y = alpha * (basis.direct_matrix(q) - basis.exchange_matrix(q))
    if extra is not None:
        y = y + extra
    return 0.5 * (y + y.conj().T)


def vacuum_projector(q: np.ndarray, basis: TruncatedBasis, alpha: float | None = None,
                     extra: np.ndarray | None = None, gap_tol: float = 1e-8) -> np.ndarray:
    """chi_(-inf,0)(D0 + Y) - P0_- by diagonalization."""
    d = basis.d0_matrix() + perturbation(q, basis, alpha, extra)
    e, v = np.linalg.eigh(d)
    if np.min(np.abs(e)) < gap_tol:
        raise GapClosure(f"smallest |eigenvalue| {np.min(np.abs(e)):.2e}")
    vm = v[:, e < 0]
    return vm @ vm.conj().T - basis.vacuum_projector()


def _nodes(n: int, scale: float) -> tuple[np.ndarray, np.ndarray]:
    u, w = np.polynomial.legendre.leggauss(n)
    u = u * (np.pi / 2)
    w = w * (np.pi / 2)
    return scale * np.tan(u), w * scale / np.cos(u) ** 2


def cauchy_term(order: int, q: np.ndarray, basis: TruncatedBasis, alpha: float | None = None,
                extra: np.ndarray | None = None, n_nodes: int = 200, scale: float | None = None,
                y: np.ndarray | None = None) -> np.ndarray:
    """Order-j term of chi_(-inf,0)(D0 + Y) in powers of Y.

    -(1/2pi) (-1)^j int R (Y R)^j d omega with R = (D0 + i omega)^-1, computed in
    the eigenbasis of D0 with omega = scale * tan(u) and Gauss-Legendre in u.
    The default scale is the mass gap, where the integrand varies fastest.
    """
    if order < 1 or order > 3:
        raise ValueError("orders 1..3 are supported")
    if y is None:
        y = perturbation(q, basis, alpha, extra)
    e, v = basis.d0_spectrum()
    if scale is None:
        scale = float(np.min(np.abs(e)))
    yt = v.conj().T @ y @ v
    omega, w = _nodes(n_nodes, scale)
    acc = np.zeros_like(yt)
    for om, wt in zip(omega, w):
        r = 1.0 / (e + 1j * om)
        if order == 1:
            term = r[:, None] * yt * r[None, :]
        else:
            yr = yt * r[None, :]
            term = r[:, None] * yt * r[None, :]
            for _ in range(order - 1):
                term = term @ yr
        acc += wt * term
    out = -((-1) ** order) / (2 * np.pi) * acc
    out = v @ out @ v.conj().T
    herm = np.max(np.abs(out - out.conj().T))
    if not np.isfinite(herm):
        raise NonConvergence("resolvent quadrature produced non-finite values")
    return 0.5 * (out + out.conj().T)


def first_order_exact(q: np.ndarray, basis: TruncatedBasis, alpha: float | None = None,
                      extra: np.ndarray | None = None, y: np.ndarray | None = None) -> np.ndarray:
    """Closed-form first-order term: Y_ab / (E_a - E_b) between opposite-sign levels."""
    if y is None:
        y = perturbation(q, basis, alpha, extra)
    e, v = basis.d0_spectrum()
    yt = v.conj().T @ y @ v
    sa = np.sign(e)
    diff = e[:, None] - e[None, :]
    mask = sa[:, None] != sa[None, :]
    # Y_ab (s_a - s_b) / (2 (E_b - E_a)) is nonzero only across the gap
    coef = np.where(mask, (sa[:, None] - sa[None, :]) / (2 * np.where(mask, -diff, 1.0)), 0.0)
    return v @ (yt * coef) @ v.conj().T


@dataclass(frozen=True, eq=False)
class CauchyTermSet:
    terms: tuple

    def hermiticity(self) -> float:
        return max(float(np.max(np.abs(t - t.conj().T))) for t in self.terms)

    def partial_sum(self, order: int) -> np.ndarray:
        return sum(self.terms[:order])


def cauchy_terms(q: np.ndarray, basis: TruncatedBasis, orders: int = 3, **kw) -> CauchyTermSet:
    y = perturbation(q, basis, kw.pop("alpha", None), kw.pop("extra", None))
    return CauchyTermSet(tuple(cauchy_term(j, q, basis, y=y, **kw) for j in range(1, orders + 1)))


def kinetic_estimate(gamma: np.ndarray, basis: TruncatedBasis) -> float:
    """|| |D0|^(1/2) gamma ||_HS."""
    e, v = basis.d0_spectrum()
    g = v.conj().T @ gamma @ v
    return float(np.sqrt(np.sum(np.abs(e)[:, None] * np.abs(g) ** 2)))
