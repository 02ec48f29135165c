"""Non-relativistic reference problems on radial grids.

Two functionals share one solver:

* the Pekar functional  T(f) - D(|f|^2/4pi, |f|^2/4pi)  of a radial profile, and
* the multiplet energy  (2j0+1) T_l(f) - I(f)  of a full SU(2) multiplet
  f(r) Phi_m, m = -j0..j0, where I is either the product-density integral or
  the Coulomb exchange norm of the multiplet projector.

Profiles are full radial functions normalized by int f^2 r^2 dr = 1.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .dressing import NonConvergence
from .radial import RadialMesh
from .spinors import sphere_rule, spherical_harmonic, spherical_spinor

__all__ = [
    "FlowConfig",
    "NRChannelProblem",
    "NRResult",
    "TruncationWarning",
    "gaussian_profile",
    "pekar_energy",
    "pekar_parts",
    "pekar_minimize",
    "channel_energy",
    "channel_minimize",
    "exchange_norm_multiplet",
    "interaction_kernel",
    "multiplet_multipole_weights",
    "gaussian_pekar_energy",
    "PEKAR_GAUSSIAN_WIDTH",
]

log = logging.getLogger(__name__)

PEKAR_GAUSSIAN_WIDTH = 3.0 * np.sqrt(np.pi / 2.0)


class TruncationWarning(UserWarning):
    pass


def gaussian_profile(mesh: RadialMesh, sigma: float, ell: int = 0) -> np.ndarray:
    """r^l exp(-r^2 / (2 sigma^2)), normalized on the mesh."""
    f = mesh.r**ell * np.exp(-(mesh.r**2) / (2.0 * sigma**2))
    return f / np.sqrt(mesh.integrate(f * f))


def gaussian_pekar_energy(sigma: float) -> float:
    """Closed form for the normalized Gaussian exp(-r^2 / 2 sigma^2)."""
    return 3.0 / (2.0 * sigma**2) - np.sqrt(2.0 / np.pi) / sigma


@dataclass(frozen=True)
class FlowConfig:
    tol: float = 1e-7
    max_iter: int = 2000
    armijo: float = 1e-4
    shift: float = 0.3
    initial_width: float = PEKAR_GAUSSIAN_WIDTH


@dataclass(frozen=True, eq=False)
class NRChannelProblem:
    """Multiplet problem for j0 = ell0 + 1/2 with channel sign eps."""

    ell0: int
    eps: int
    mesh: RadialMesh
    interaction_mode: str = "exchange-multipole"
    l_max: int | None = None

    def __post_init__(self) -> None:
        if self.ell0 < 0 or self.eps not in (1, -1):
            raise ValueError("need ell0 >= 0 and eps = +1 or -1")
        if self.interaction_mode not in ("product-density", "exchange-multipole", "none"):
            raise ValueError(f"unknown interaction mode {self.interaction_mode!r}")
        if self.centrifugal < 0:
            raise ValueError("negative centrifugal coefficient")

    @property
    def two_j0(self) -> int:
        return 2 * self.ell0 + 1

    @property
    def ell(self) -> int:
        """Orbital of the upper spinor, j0 + eps/2."""
        return (self.two_j0 + self.eps) // 2

    @property
    def centrifugal(self) -> float:
        j0 = self.two_j0 / 2
        return (j0 + self.eps / 2) * (j0 + 1 + self.eps / 2)

    @property
    def multiplicity(self) -> int:
        return self.two_j0 + 1

    def weights(self) -> dict[int, float]:
        """Coefficients c_L of int f^2 V_L[f^2] r^2 dr in the interaction."""
        if self.interaction_mode == "none":
            return {}
        if self.interaction_mode == "product-density":
            return {0: float(self.multiplicity**2)}
        l_max = 2 * self.multiplicity if self.l_max is None else self.l_max
        return multiplet_multipole_weights(self.two_j0, self.ell, l_max)


@dataclass(frozen=True, eq=False)
class NRResult:
    profile: np.ndarray
    mesh: RadialMesh
    energy: float
    eigenvalue: float
    kinetic: float
    interaction: float
    residual: float
    iterations: int
    history: tuple = field(default=(), repr=False)

    @property
    def virial(self) -> dict:
        e = self.energy
        return {
            "T": self.kinetic,
            "V": self.interaction,
            "T_over_minus_E": self.kinetic / -e if e else np.nan,
            "V_over_minus_2E": self.interaction / (-2 * e) if e else np.nan,
        }


# ---------------------------------------------------------------------------
# multipole weights of a multiplet


@lru_cache(maxsize=None)
def _pair_multipoles(two_j: int, ell: int, l_max: int, n_quad: int = 24) -> dict[int, float]:
    pts, wts = sphere_rule(n_quad)
    theta = np.arccos(np.clip(pts[:, 2], -1, 1))
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    spinors = [spherical_spinor(two_j, tm, ell, pts) for tm in range(-two_j, two_j + 1, 2)]
    out: dict[int, float] = {}
    for big_l in range(l_max + 1):
        total = 0.0
        for big_m in range(-big_l, big_l + 1):
            ylm = np.conj(spherical_harmonic(big_l, big_m, theta, phi))
            for a in spinors:
                for b in spinors:
                    amp = np.sum(wts * np.sum(np.conj(a) * b, axis=1) * ylm)
                    total += abs(amp) ** 2
        out[big_l] = 4 * np.pi / (2 * big_l + 1) * total
    return out


def multiplet_multipole_weights(two_j: int, ell: int, l_max: int) -> dict[int, float]:
    """c_L with ||Gamma||^2 = sum_L c_L int f^2 V_L[f^2] r^2 dr; odd L vanish by parity."""
    weights = _pair_multipoles(two_j, ell, max(l_max, 2 * ell + 2))
    kept = {k: v for k, v in weights.items() if k <= l_max and v > 1e-14}
    tail = sum(v for k, v in weights.items() if k > l_max)
    if tail > 1e-8 * sum(weights.values()):
        warnings.warn(f"multipole tail {tail:.2e} beyond L_max={l_max}", TruncationWarning, stacklevel=2)
    return kept


# ---------------------------------------------------------------------------
# energies


def _kinetic_matrix(mesh: RadialMesh, centrifugal: float) -> np.ndarray:
    return mesh.kinetic_form(centrifugal)


def _interaction(mesh: RadialMesh, f: np.ndarray, weights: dict[int, float]):
    """Interaction value and the potential sum_L c_L V_L[f^2]."""
    rho = f * f
    pot = np.zeros_like(f)
    for big_l, c in weights.items():
        pot += c * (mesh.coulomb_matrix(big_l) @ rho)
    return float(rho @ pot), pot / mesh.w


def _check_norm(mesh: RadialMesh, f: np.ndarray) -> None:
    nrm = mesh.integrate(f * f)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"profile not normalized (norm^2 = {nrm:.10f})")


def pekar_parts(f: np.ndarray, mesh: RadialMesh) -> tuple[float, float]:
    """(T, D) for a normalized radial profile."""
    f = np.asarray(f, dtype=float)
    t = float(f @ _kinetic_matrix(mesh, 0.0) @ f)
    d, _ = _interaction(mesh, f, {0: 1.0})
    return t, d


def pekar_energy(f: np.ndarray, mesh: RadialMesh) -> float:
    """||grad psi||^2 - D(|psi|^2, |psi|^2) for psi = f(r) / sqrt(4 pi)."""
    _check_norm(mesh, f)
    t, d = pekar_parts(f, mesh)
    return t - d


def channel_energy(f: np.ndarray, prob: NRChannelProblem) -> float:
    _check_norm(prob.mesh, f)
    t, v = _channel_parts(np.asarray(f, dtype=float), prob)
    return t - v


def _channel_parts(f: np.ndarray, prob: NRChannelProblem) -> tuple[float, float]:
    t = prob.multiplicity * float(f @ _kinetic_matrix(prob.mesh, prob.centrifugal) @ f)
    v, _ = _interaction(prob.mesh, f, prob.weights())
    return t, v


def interaction_kernel(prob: NRChannelProblem, r1, r2) -> np.ndarray:
    """w(r1, r2) = sum_L c_L r_<^L / r_>^(L+1); the interaction is the double integral of f^2 w f^2 r1^2 r2^2."""
    r1, r2 = np.broadcast_arrays(np.asarray(r1, dtype=float), np.asarray(r2, dtype=float))
    lo, hi = np.minimum(r1, r2), np.maximum(r1, r2)
    out = np.zeros(lo.shape)
    for big_l, c in prob.weights().items():
        out += c * lo**big_l / hi ** (big_l + 1)
    return out


def exchange_norm_multiplet(f: np.ndarray, prob: NRChannelProblem) -> float:
    """Coulomb exchange norm of the multiplet projector, by multipoles."""
    _check_norm(prob.mesh, f)
    l_max = 2 * prob.multiplicity if prob.l_max is None else prob.l_max
    w = multiplet_multipole_weights(prob.two_j0, prob.ell, l_max)
    v, _ = _interaction(prob.mesh, np.asarray(f, dtype=float), w)
    return max(v, 0.0)


# ---------------------------------------------------------------------------
# normalized, preconditioned gradient flow


def _descend(mesh, kin_scale, kin, weights, f0, config: FlowConfig):
    w = mesh.w
    a = kin_scale * kin
    # Hessian of f.A.f is 2A, so this makes unit steps Newton-like on stiff modes
    pre = cho_factor(2.0 * (a + config.shift * np.diag(w)))

    def energy(f):
        v, pot = _interaction(mesh, f, weights)
        t = float(f @ a @ f)
        return t - v, pot, t + v

    def residual(f, pot):
        # L2 gradient 2 H f with H = W^-1 A - 2 pot
        hf = (a @ f) / w - 2 * pot * f
        mu = mesh.integrate(f * hf)
        r = hf - mu * f
        return r, mu, float(np.sqrt(mesh.integrate(r * r)))

    f = f0 / np.sqrt(mesh.integrate(f0 * f0))
    e, pot, scale = energy(f)
    history = [e]
    tau = 0.5
    for it in range(config.max_iter):
        r, mu, resid = residual(f, pot)
        if resid <= config.tol:
            break
        grad = 2 * w * r  # Euclidean gradient restricted to the tangent space
        d = cho_solve(pre, grad)
        d -= mesh.integrate(f * d) * f
        slope = float(grad @ d)
        # below this, energy differences are rounding noise of T and V
        floor = 1024 * np.finfo(float).eps * scale
        while True:
            trial = f - tau * d
            trial /= np.sqrt(mesh.integrate(trial * trial))
            et, pt, st = energy(trial)
            if et <= e - config.armijo * tau * slope:
                break
            if tau * slope < floor and et <= e + floor and residual(trial, pt)[2] < resid:
                break
            tau *= 0.5
            if tau < 1e-12:
                raise NonConvergence(f"line search failed at residual {resid:.2e}")
        f, e, pot, scale = trial, et, pt, st
        history.append(e)
        # the preconditioned direction is Newton-like, so steps beyond 1 only overshoot
        tau = min(2.0 * tau, 1.0)
    else:
        raise NonConvergence(f"stationarity residual {resid:.2e} after {config.max_iter} steps")
    if f[np.argmax(np.abs(f))] < 0:
        f = -f
    return f, e, mu, resid, it, history


def pekar_minimize(mesh: RadialMesh | None = None, config: FlowConfig | None = None) -> NRResult:
    mesh = mesh or RadialMesh.log()
    config = config or FlowConfig()
    f0 = gaussian_profile(mesh, config.initial_width)
    f, e, mu, resid, it, hist = _descend(mesh, 1.0, _kinetic_matrix(mesh, 0.0), {0: 1.0}, f0, config)
    t, d = pekar_parts(f, mesh)
    return NRResult(f, mesh, t - d, -mu, t, d, resid, it, tuple(hist))


def channel_minimize(prob: NRChannelProblem, config: FlowConfig | None = None) -> NRResult:
    config = config or FlowConfig()
    f0 = gaussian_profile(prob.mesh, config.initial_width, prob.ell)
    kin = _kinetic_matrix(prob.mesh, prob.centrifugal)
    f, e, mu, resid, it, hist = _descend(
        prob.mesh, prob.multiplicity, kin, prob.weights(), f0, config
    )
    t, v = _channel_parts(f, prob)
    return NRResult(f, prob.mesh, t - v, -mu, t, v, resid, it, tuple(hist))
