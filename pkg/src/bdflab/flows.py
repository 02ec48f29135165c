"""Critical-point searches on projector matrices of a truncated basis.

Steps move P along exp(tA) P exp(-tA) with A block off-diagonal, so every
iterate is an exact projector.  The descent generator is the commutator
[P, D] rescaled by an orbital-energy preconditioner; symmetry tags are kept
by averaging A with its I_s or C image.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dressing import NonConvergence
from .energy import EnergyBreakdown
from .galerkin import TruncatedBasis
from .geometry import (
    ComponentLabel,
    build_tangent,
    classify,
    decompose,
    exp_retraction,
    projector_angle,
)

__all__ = [
    "FlowConfig",
    "CriticalPointReport",
    "LoopDiscretization",
    "CrossingLost",
    "ComponentEscape",
    "DimensionMismatch",
    "mean_field",
    "total_energy",
    "gradient",
    "directional_derivative",
    "descent_step",
    "minimize_component",
    "initial_loop",
    "mountain_pass",
    "aufbau_refine",
    "eigen_extract",
    "symmetry_residual",
    "parity_signs",
    "parity_residual",
]

log = logging.getLogger(__name__)


class CrossingLost(RuntimeError):
    """No loop node pair brackets the angle pi/2."""


class ComponentEscape(RuntimeError):
    """The component label changed during a flow."""


class DimensionMismatch(RuntimeError):
    """Ran P meets the positive spectral subspace in the wrong dimension."""


@dataclass(frozen=True)
class FlowConfig:
    step: float = 1.0
    armijo: float = 1e-4
    max_steps: int = 100_000
    tol: float = 1e-6
    eta: float = 0.0
    reference: np.ndarray | None = field(default=None, repr=False, compare=False)
    restart: int = 50
    shift: float = 1e-3

    def __post_init__(self) -> None:
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.eta < 0:
            raise ValueError("penalty weight must be non-negative")


# ---------------------------------------------------------------------------
# energy, mean field and gradient


def _q(p: np.ndarray, basis: TruncatedBasis) -> np.ndarray:
    return np.asarray(p, dtype=complex) - basis.vacuum_projector()


def mean_field(p: np.ndarray, basis: TruncatedBasis, eta: float = 0.0,
               reference: np.ndarray | None = None) -> np.ndarray:
    """D_Q plus the penalty term 2 eta (Q - A_eta)."""
    q = _q(p, basis)
    d = basis.mean_field(q)
    if eta:
        ref = np.zeros_like(q) if reference is None else reference
        d = d + 2 * eta * (q - ref)
    return d


def total_energy(p: np.ndarray, basis: TruncatedBasis, eta: float = 0.0,
                 reference: np.ndarray | None = None) -> EnergyBreakdown:
    q = _q(p, basis)
    e = basis.energy(q)
    pen = 0.0
    if eta:
        ref = np.zeros_like(q) if reference is None else reference
        pen = eta * float(np.linalg.norm(q - ref) ** 2)
    return EnergyBreakdown(e.kinetic, e.direct, e.external, e.exchange, pen)


def gradient(p: np.ndarray, basis: TruncatedBasis, d: np.ndarray | None = None, **kw) -> np.ndarray:
    """[[D, P], P]: the part of the mean field that rotates Ran P."""
    d = mean_field(p, basis, **kw) if d is None else d
    c = d @ p - p @ d
    return c @ p - p @ c


def directional_derivative(p: np.ndarray, a: np.ndarray, basis: TruncatedBasis,
                           d: np.ndarray | None = None, **kw) -> float:
    """d/dt E(exp(tA) P exp(-tA)) at t = 0, i.e. Tr(grad [A, P])."""
    g = gradient(p, basis, d, **kw)
    v = a @ p - p @ a
    return float(np.real(np.trace(g @ v)))


def symmetry_residual(p: np.ndarray, basis: TruncatedBasis, tag: str) -> float:
    """HS distance between Q and its symmetric image for tag Is, C or W."""
    q = _q(p, basis)
    if tag == "Is":
        return float(np.linalg.norm(basis.inversion_operator(q) + q))
    if tag in ("C", "W"):
        return float(np.linalg.norm(basis.conjugate_operator(q) + q))
    return 0.0


def parity_signs(basis: TruncatedBasis) -> np.ndarray:
    """Spatial parity (-1)^l of the upper orbital, one entry per basis row."""
    return np.array([(-1) ** ((ch.two_j + ch.eps) // 2) for ch in basis.channel_labels()])


def parity_residual(p: np.ndarray, basis: TruncatedBasis) -> float:
    par = parity_signs(basis)
    return float(np.max(np.abs(p * (par[:, None] != par[None, :]))))


def _symmetrize_generator(a: np.ndarray, basis: TruncatedBasis, tag: str,
                          parity: np.ndarray | None = None) -> np.ndarray:
    if parity is not None:
        a = a * (parity[:, None] == parity[None, :])
    if tag == "Is":
        a = 0.5 * (a + basis.inversion_operator(a))
    elif tag in ("C", "W"):
        a = 0.5 * (a + basis.conjugate_operator(a))
    return 0.5 * (a - a.conj().T)


def _symmetrize_projector(p: np.ndarray, basis: TruncatedBasis, tag: str,
                          parity: np.ndarray | None = None) -> np.ndarray:
    """Average with the symmetric image; second order in the defect, so P stays a projector."""
    one = np.eye(len(p))
    if parity is not None:
        p = p * (parity[:, None] == parity[None, :])
    if tag == "Is":
        p = 0.5 * (p + one - basis.inversion_operator(p))
    elif tag in ("C", "W"):
        p = 0.5 * (p + one - basis.conjugate_operator(p))
    return 0.5 * (p + p.conj().T)


def _preconditioned_generator(p: np.ndarray, d: np.ndarray, shift: float) -> np.ndarray:
    """[P, D] with each occupied/empty pair scaled by 1/(|e_u - e_o| + shift)."""
    lam, vec = np.linalg.eigh(p)
    occ = vec[:, lam > 0.5]
    emp = vec[:, lam <= 0.5]
    do, vo = np.linalg.eigh(occ.conj().T @ d @ occ)
    du, vu = np.linalg.eigh(emp.conj().T @ d @ emp)
    bo, bu = occ @ vo, emp @ vu
    block = bo.conj().T @ d @ bu
    block = block / (np.abs(du[None, :] - do[:, None]) + shift)
    a = bo @ block @ bu.conj().T
    return a - a.conj().T


def descent_step(p: np.ndarray, basis: TruncatedBasis, cfg: FlowConfig, tag: str = "none",
                 reference: np.ndarray | None = None, e0: float | None = None,
                 parity: np.ndarray | None = None):
    """One Armijo-controlled retraction step; returns (P, energy, grad norm, accepted).

    With ``parity`` (signs per row) the generator is restricted to the blocks
    commuting with spatial parity.
    """
    d = mean_field(p, basis, cfg.eta, reference)
    c = d @ p - p @ d
    gnorm = float(np.linalg.norm(c))
    if e0 is None:
        e0 = total_energy(p, basis, cfg.eta, reference).total
    if gnorm <= cfg.tol:
        return p, e0, gnorm, False
    a = _symmetrize_generator(_preconditioned_generator(p, d, cfg.shift), basis, tag, parity)
    slope = float(np.real(np.trace(d @ (a @ p - p @ a))))
    if slope >= 0:
        a = _symmetrize_generator(p @ d - d @ p, basis, tag, parity)
        slope = float(np.real(np.trace(d @ (a @ p - p @ a))))
    # below this predicted decrease the energy difference is rounding noise
    floor = 64 * np.finfo(float).eps * max(1.0, abs(e0))
    tau = cfg.step
    while tau > 1e-10:
        trial = _symmetrize_projector(exp_retraction(p, tau, a), basis, tag, parity)
        et = total_energy(trial, basis, cfg.eta, reference).total
        if et <= e0 + cfg.armijo * tau * slope:
            return trial, et, gnorm, True
        if -tau * slope < floor and et <= e0 + floor:
            dt = mean_field(trial, basis, cfg.eta, reference)
            if np.linalg.norm(dt @ trial - trial @ dt) < gnorm:
                return trial, et, gnorm, True
        tau *= 0.5
    return p, e0, gnorm, False


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True, eq=False)
class CriticalPointReport:
    projector: np.ndarray = field(repr=False)
    residual: float
    mu: float
    gap: float
    energy: EnergyBreakdown
    mass: float
    steps: int
    tag: str
    label: ComponentLabel | None = None
    orbitals: np.ndarray | None = field(default=None, repr=False)
    reconstruction: float = float("nan")
    symmetry: float = float("nan")
    history: tuple = field(default=(), repr=False)

    @property
    def mu_in_gap(self) -> bool:
        """0 < mu < m."""
        return bool(0 < self.mu < self.mass)

    def summary(self) -> dict:
        return {
            "energy": self.energy.total,
            "breakdown": self.energy.as_dict(),
            "mu": self.mu,
            "mass": self.mass,
            "mu_in_gap": self.mu_in_gap,
            "gap": self.gap,
            "residual": self.residual,
            "reconstruction": self.reconstruction,
            "symmetry_residual": self.symmetry,
            "steps": self.steps,
            "tag": self.tag,
            "label": None if self.label is None else self.label.triples(),
        }


def eigen_extract(p: np.ndarray, basis: TruncatedBasis, kind: str = "Is", multiplicity: int = 1,
                  d: np.ndarray | None = None, **kw):
    """(mu, psi_a, reconstruction residual, spectral gap) of a near-critical P.

    psi_a spans Ran P intersected with the positive spectral subspace of the
    mean field; ``kind`` chooses the partner map (I_s or C) in the rebuilt
    projector.
    """
    d = mean_field(p, basis, **kw) if d is None else d
    e, v = np.linalg.eigh(d)
    pos = e > 0
    weight = np.real(np.sum(np.conj(v) * (p @ v), axis=0))
    sel = np.flatnonzero(pos & (weight > 0.5))
    if len(sel) != multiplicity:
        raise DimensionMismatch(f"Ran P meets the positive subspace in dimension {len(sel)}, expected {multiplicity}")
    psi = v[:, sel]
    mu = float(np.mean(e[sel]))
    if kind == "Is":
        partner = basis.is_matrix() @ psi
    elif kind in ("C", "W"):
        partner = basis.c_matrix() @ np.conj(psi)
    else:
        raise ValueError("kind must be Is, C or W")
    neg = v[:, e < 0]
    rebuilt = neg @ neg.conj().T + psi @ psi.conj().T - partner @ partner.conj().T
    recon = float(np.max(np.abs(rebuilt - p)))
    others = np.delete(e, sel)
    gap = float(np.min(np.abs(others - mu))) if len(others) else float("inf")
    return mu, psi, recon, gap


# ---------------------------------------------------------------------------
# component minimization (W states)


def minimize_component(start: np.ndarray, basis: TruncatedBasis, cfg: FlowConfig | None = None,
                       multiplicity: int = 2, check_label: bool = True) -> CriticalPointReport:
    """Penalized retraction descent inside one component of the C-symmetric equivariant set.

    A parity-definite start keeps parity exactly: the mean field commutes with
    it, but parity mixing is an unstable direction that roundoff would
    otherwise seed, and along it the label is not protected.
    """
    cfg = cfg or FlowConfig()
    p = np.asarray(start, dtype=complex)
    parity = parity_signs(basis) if parity_residual(p, basis) < 1e-10 else None
    p = _symmetrize_projector(p, basis, "W", parity)
    label0 = classify(p, basis) if check_label else None
    ref = cfg.reference if cfg.reference is not None else _q(p, basis)
    e = total_energy(p, basis, cfg.eta, ref).total
    history = [e]
    steps = 0
    gnorm = np.inf
    for it in range(cfg.max_steps):
        if cfg.eta and it and it % cfg.restart == 0:
            ref = _q(p, basis)
            e = total_energy(p, basis, cfg.eta, ref).total
        p, e, gnorm, accepted = descent_step(p, basis, cfg, "W", ref, e, parity)
        if gnorm <= cfg.tol:
            break
        if not accepted:
            raise NonConvergence(f"line search stalled at gradient {gnorm:.2e}")
        steps += 1
        history.append(e)
        if check_label and steps % 25 == 0 and classify(p, basis) != label0:
            raise ComponentEscape("label changed during descent")
    else:
        raise NonConvergence(f"gradient {gnorm:.2e} after {cfg.max_steps} steps")
    label = classify(p, basis) if check_label else None
    if check_label and label != label0:
        raise ComponentEscape(f"label {label0} -> {label}")
    d = mean_field(p, basis, cfg.eta, ref)
    mu, psi, recon, gap = eigen_extract(p, basis, "W", multiplicity, d=d)
    return CriticalPointReport(
        projector=p, residual=gnorm, mu=mu, gap=gap, energy=total_energy(p, basis, cfg.eta, ref),
        mass=basis.dispersion.mass, steps=steps, tag="W", label=label, orbitals=psi,
        reconstruction=recon, symmetry=symmetry_residual(p, basis, "W"), history=tuple(history),
    )


# ---------------------------------------------------------------------------
# mountain pass (I_s states)


@dataclass(frozen=True, eq=False)
class LoopDiscretization:
    s: np.ndarray
    projectors: tuple = field(repr=False)

    def __post_init__(self) -> None:
        if self.s[0] != 0 or self.s[-1] != 1 or np.any(np.diff(self.s) <= 0):
            raise ValueError("s-grid must increase from 0 to 1")


def initial_loop(psi: np.ndarray, basis: TruncatedBasis, m: int = 64) -> LoopDiscretization:
    """P(s) = P0 - |I_s psi><I_s psi| + |phi_s><phi_s|, phi_s = sin(pi s) psi + cos(pi s) I_s psi."""
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    ipsi = basis.is_matrix() @ psi
    p0 = basis.vacuum_projector()
    base = p0 - np.outer(ipsi, ipsi.conj())
    s = np.linspace(0.0, 1.0, m + 1)
    nodes = []
    for sk in s:
        phi = np.sin(np.pi * sk) * psi + np.cos(np.pi * sk) * ipsi
        nodes.append(base + np.outer(phi, phi.conj()))
    nodes[0] = p0.copy()
    nodes[-1] = p0.copy()
    return LoopDiscretization(s, tuple(nodes))


def _locate_crossing(loop: list, s: np.ndarray, basis: TruncatedBasis, bisections: int = 40):
    """First sign change of angle - pi/2 between neighbours, refined along the connecting geodesic.

    Jumps larger than pi/2 are the wrap of the angle at 0 ~ pi and are skipped;
    either orientation of the loop is accepted.
    """
    angles = np.array([projector_angle(p, basis) for p in loop])
    dev = angles - np.pi / 2
    for k in range(len(loop) - 1):
        if abs(angles[k + 1] - angles[k]) >= np.pi / 2:
            continue
        if dev[k] == 0:
            return s[k], loop[k], angles
        if dev[k] * dev[k + 1] > 0:
            continue
        tangent = build_tangent(decompose(loop[k + 1], loop[k]))
        sign = np.sign(dev[k])
        lo, hi = 0.0, 1.0
        for _ in range(bisections):
            mid = 0.5 * (lo + hi)
            if sign * (projector_angle(exp_retraction(loop[k], mid, tangent), basis) - np.pi / 2) > 0:
                lo = mid
            else:
                hi = mid
        t = 0.5 * (lo + hi)
        return s[k] + t * (s[k + 1] - s[k]), exp_retraction(loop[k], t, tangent), angles
    raise CrossingLost("angle never reaches pi/2 along the loop")


def aufbau_refine(p: np.ndarray, basis: TruncatedBasis, tol: float = 1e-6, max_iter: int = 500,
                  damping: float = 0.5) -> tuple[np.ndarray, float, int]:
    """Self-consistent refinement of an I_s state with one occupied positive level.

    The input mean field is mixed with the output one; the occupied level is the
    positive eigenvector with the largest weight in the current Ran P.
    """
    p = np.asarray(p, dtype=complex)
    d_in = mean_field(p, basis)
    inv = basis.is_matrix()
    resid = np.inf
    for it in range(max_iter):
        e, v = np.linalg.eigh(d_in)
        pos = np.flatnonzero(e > 0)
        weight = np.real(np.sum(np.conj(v[:, pos]) * (p @ v[:, pos]), axis=0))
        psi = v[:, pos[np.argmax(weight)]]
        neg = v[:, e < 0]
        ipsi = inv @ psi
        p = neg @ neg.conj().T - np.outer(ipsi, ipsi.conj()) + np.outer(psi, psi.conj())
        p = _symmetrize_projector(p, basis, "Is")
        d_out = mean_field(p, basis)
        resid = float(np.linalg.norm(d_out @ p - p @ d_out))
        if resid <= tol:
            return p, resid, it
        d_in = (1 - damping) * d_in + damping * d_out
        d_in = 0.5 * (d_in - basis.inversion_operator(d_in))
    raise NonConvergence(f"self-consistent residual {resid:.2e} after {max_iter} iterations")


def mountain_pass(psi0, basis: TruncatedBasis, m: int = 64, cfg: FlowConfig | None = None,
                  sweeps: int = 4, refine_tol: float = 1e-11, progress: list | None = None) -> CriticalPointReport:
    """Loop flow with crossing tracking, then self-consistent refinement of the crossing state.

    ``psi0`` is a coefficient vector or channel orbital(s); it is projected onto the
    positive subspace of the truncated dressed operator.
    """
    cfg = cfg or FlowConfig(max_steps=1)
    vec = psi0 if isinstance(psi0, np.ndarray) else basis.from_orbital(psi0)
    vec = basis.positive_projector() @ vec
    vec = vec / np.linalg.norm(vec)
    loop = initial_loop(vec, basis, m)
    nodes = list(loop.projectors)
    energies = np.array([total_energy(pk, basis).total for pk in nodes])
    records = []
    s_cross, p_cross = None, None
    for sweep in range(sweeps + 1):
        s_cross, p_cross, _ = _locate_crossing(nodes, loop.s, basis)
        d = mean_field(p_cross, basis)
        gnorm = float(np.linalg.norm(d @ p_cross - p_cross @ d))
        rec = {"sweep": sweep, "sup_energy": float(energies.max()), "argmax_s": float(loop.s[np.argmax(energies)]),
               "crossing_s": float(s_cross), "gradient": gnorm,
               "endpoint_energy": float(max(abs(energies[0]), abs(energies[-1])))}
        records.append(rec)
        log.info("sweep %d: sup E = %.10f, crossing s = %.4f, |grad| = %.2e", sweep, rec["sup_energy"], s_cross, gnorm)
        if sweep == sweeps:
            break
        for k in range(1, m):
            nodes[k], energies[k], _, _ = descent_step(nodes[k], basis, cfg, "Is", None, energies[k])
    if progress is not None:
        progress.extend(records)
    p, resid, its = aufbau_refine(p_cross, basis, tol=refine_tol)
    d = mean_field(p, basis)
    mu, psi, recon, gap = eigen_extract(p, basis, "Is", 1, d=d)
    return CriticalPointReport(
        projector=p, residual=resid, mu=mu, gap=gap, energy=total_energy(p, basis),
        mass=basis.dispersion.mass, steps=its, tag="Is", orbitals=psi, reconstruction=recon,
        symmetry=symmetry_residual(p, basis, "Is"), history=tuple(records),
    )
