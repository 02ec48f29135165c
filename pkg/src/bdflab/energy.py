"""BDF energy of finite-rank states built from channel orbitals.

A state is Q = sum_i lam_i |f_i><f_i| where each f_i is a tuple of channel
orbitals (one per angular channel, all on one paired radial mesh).  Densities
and Coulomb pairings are expanded in multipoles: every product S_a^+ S_b of
channel spinors is reduced to coefficients against Y_LM by sphere quadrature,
and radial pairings go through the mesh's symmetric Coulomb matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .dressing import (
    DressedDispersion,
    MomentumOrbital,
    RegimeViolation,
    abs_d0_expectation,
    apply_d0,
    d0_expectation,
    from_momentum,
    paired_meshes,
    project_negative,
    project_positive,
    to_momentum,
)
from .nonrel import NRChannelProblem, NRResult
from .radial import RadialMesh
from .spinors import AngularChannel, ChannelOrbital, channel_spinor, sphere_rule, spherical_harmonic

__all__ = [
    "Orbital",
    "FiniteRankState",
    "EnergyBreakdown",
    "ExternalDensity",
    "Density",
    "ProjectionLoss",
    "as_orbital",
    "orbital_inner",
    "orbital_norm",
    "orbital_add",
    "orbital_scale",
    "conjugate_orbital",
    "inversion_orbital",
    "density",
    "pair_density",
    "coulomb_pairing",
    "exchange_norm",
    "exchange_cross",
    "kinetic_trace",
    "abs_kinetic_square_trace",
    "gradient_square_trace",
    "hs_distance_sq",
    "block_eigenvalues",
    "bdf_energy",
    "mean_field_apply",
    "loop_state",
    "loop_energy",
    "cpair_closed_form",
    "build_pekar_trial",
    "build_multiplet_trial",
    "random_admissible_state",
    "KATO_CONSTANT",
]

KATO_CONSTANT = np.pi / 2
Orbital = tuple  # tuple[ChannelOrbital, ...], distinct channels, one mesh


class ProjectionLoss(RuntimeError):
    """Too much of a trial orbital was removed by the positive projector."""


# ---------------------------------------------------------------------------
# orbitals spread over several channels


def as_orbital(f) -> Orbital:
    if isinstance(f, ChannelOrbital):
        return (f,)
    parts = tuple(f)
    chans = [p.channel for p in parts]
    if len(set(chans)) != len(chans):
        raise ValueError("an orbital may hold each channel at most once")
    if parts and any(p.mesh is not parts[0].mesh for p in parts):
        raise ValueError("orbital parts must share one mesh")
    return parts


def orbital_inner(f, g) -> complex:
    gmap = {p.channel: p for p in as_orbital(g)}
    return sum((p.inner(gmap[p.channel]) for p in as_orbital(f) if p.channel in gmap), 0.0j)


def orbital_norm(f) -> float:
    return float(np.sqrt(max(orbital_inner(f, f).real, 0.0)))


def orbital_scale(f, c: complex) -> Orbital:
    return tuple(p.scaled(c) for p in as_orbital(f))


def orbital_add(f, g) -> Orbital:
    out = {p.channel: p for p in as_orbital(f)}
    for p in as_orbital(g):
        out[p.channel] = out[p.channel] + p if p.channel in out else p
    return tuple(out[k] for k in sorted(out))


def conjugate_orbital(f) -> Orbital:
    return tuple(p.charge_conjugated() for p in as_orbital(f))


def inversion_orbital(f) -> Orbital:
    return tuple(p.inversion_partner() for p in as_orbital(f))


def _mesh_of(f) -> RadialMesh:
    return as_orbital(f)[0].mesh


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True, eq=False)
class FiniteRankState:
    """Q = sum lam_i |f_i><f_i| with a symmetry tag in {none, C, Is, W}."""

    entries: tuple
    dispersion: DressedDispersion
    tag: str = "none"
    info: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.tag not in ("none", "C", "Is", "W"):
            raise ValueError(f"unknown symmetry tag {self.tag!r}")
        clean = []
        for lam, f in self.entries:
            lam = float(lam)
            if not -1.0 - 1e-12 <= lam <= 1.0 + 1e-12:
                raise ValueError(f"coefficient {lam} outside [-1, 1]")
            clean.append((lam, as_orbital(f)))
        object.__setattr__(self, "entries", tuple(clean))

    @classmethod
    def vacuum(cls, d: DressedDispersion) -> "FiniteRankState":
        return cls((), d)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([lam for lam, _ in self.entries])

    @property
    def orbitals(self) -> list:
        return [f for _, f in self.entries]

    @property
    def mesh(self) -> RadialMesh | None:
        return _mesh_of(self.entries[0][1]) if self.entries else None

    def channels(self) -> list[AngularChannel]:
        return sorted({p.channel for _, f in self.entries for p in f})

    def charge_trace(self) -> float:
        """Tr Q = sum lam_i |f_i|^2."""
        return float(sum(lam * orbital_norm(f) ** 2 for lam, f in self.entries))

    def conjugated(self) -> "FiniteRankState":
        """-C Q C."""
        return FiniteRankState(tuple((-lam, conjugate_orbital(f)) for lam, f in self.entries), self.dispersion)

    def inverted(self) -> "FiniteRankState":
        """I_s Q I_s = -(I_s Q I_s^-1)."""
        return FiniteRankState(tuple((-lam, inversion_orbital(f)) for lam, f in self.entries), self.dispersion)

    def symmetry_residual(self) -> float:
        """HS distance to the tagged symmetric image (0 when untagged)."""
        if self.tag in ("C", "W"):
            return float(np.sqrt(max(hs_distance_sq(self, self.conjugated()), 0.0)))
        if self.tag == "Is":
            return float(np.sqrt(max(hs_distance_sq(self, self.inverted()), 0.0)))
        return 0.0


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    direct: float
    external: float
    exchange: float
    penalty: float = 0.0

    @property
    def total(self) -> float:
        return self.kinetic + self.direct + self.external + self.exchange + self.penalty

    def as_dict(self) -> dict:
        return {
            "kinetic": self.kinetic,
            "direct": self.direct,
            "external": self.external,
            "exchange": self.exchange,
            "penalty": self.penalty,
            "total": self.total,
        }


@dataclass(frozen=True, eq=False)
class ExternalDensity:
    """Radial charge density nu(r) on a mesh."""

    profile: np.ndarray
    mesh: RadialMesh

    def __post_init__(self) -> None:
        prof = np.asarray(self.profile, dtype=float)
        if prof.shape != self.mesh.r.shape:
            raise ValueError("profile must match the mesh")
        object.__setattr__(self, "profile", prof)
        if not np.isfinite(self.self_energy()):
            raise ValueError("external density has infinite Coulomb energy")

    def multipoles(self) -> dict:
        return {(0, 0): np.sqrt(4 * np.pi) * self.profile.astype(complex)}

    def self_energy(self) -> float:
        return float(4 * np.pi * self.profile @ self.mesh.coulomb_matrix(0) @ self.profile * 4 * np.pi)


# ---------------------------------------------------------------------------
# angular algebra


@lru_cache(maxsize=None)
def _angular(ch_a: AngularChannel, ch_b: AngularChannel, slot: int, big_l: int) -> complex:
    """int S_a^+ S_b conj(Y_LM) over the sphere, with M = m_b - m_a."""
    two_dm = ch_b.two_m - ch_a.two_m
    big_m = two_dm // 2
    if abs(big_m) > big_l:
        return 0.0j
    la = ch_a.ell_upper if slot == 0 else ch_a.ell_lower
    lb = ch_b.ell_upper if slot == 0 else ch_b.ell_lower
    if big_l < abs(la - lb) or big_l > la + lb or (la + lb + big_l) % 2:
        return 0.0j
    pts, wts = sphere_rule((la + lb + big_l) // 2 + 3)
    sa = channel_spinor(ch_a, slot, pts)
    sb = channel_spinor(ch_b, slot, pts)
    theta = np.arccos(np.clip(pts[:, 2], -1.0, 1.0))
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    y = spherical_harmonic(big_l, big_m, theta, phi)
    val = np.sum(wts * np.sum(np.conj(sa) * sb, axis=1) * np.conj(y))
    return complex(val) if abs(val) > 1e-14 else 0.0j


def _slot_ells(ch: AngularChannel) -> tuple[int, int]:
    return ch.ell_upper, ch.ell_lower


def _radial(p: ChannelOrbital, slot: int) -> np.ndarray:
    return p.upper if slot == 0 else p.lower


@dataclass(frozen=True, eq=False)
class Density:
    """Multipole expansion rho(x) = sum rho_LM(r) Y_LM(n)."""

    multipoles: dict
    mesh: RadialMesh

    def radial(self) -> np.ndarray:
        """Spherical average of the density."""
        return np.real(self.multipoles.get((0, 0), np.zeros(len(self.mesh.r)))) / np.sqrt(4 * np.pi)

    def max_abs(self) -> float:
        if not self.multipoles:
            return 0.0
        return float(max(np.max(np.abs(v)) for v in self.multipoles.values()))

    def values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        theta = np.arccos(np.clip(x[..., 2] / np.where(r > 0, r, 1.0), -1.0, 1.0))
        phi = np.arctan2(x[..., 1], x[..., 0])
        out = np.zeros(r.shape, dtype=complex)
        for (big_l, big_m), prof in self.multipoles.items():
            out += self.mesh.interpolate(prof, r) * spherical_harmonic(big_l, big_m, theta, phi)
        return out

    def total_charge(self) -> float:
        return float(np.real(np.sqrt(4 * np.pi) * self.mesh.integrate(self.multipoles.get((0, 0), 0.0))))


def pair_density(f, g) -> dict:
    """Multipoles of the pair density f(x)^+ g(x)."""
    out: dict = {}
    for pa in as_orbital(f):
        for pb in as_orbital(g):
            for slot in (0, 1):
                la = _slot_ells(pa.channel)[slot]
                lb = _slot_ells(pb.channel)[slot]
                prod = None
                for big_l in range(abs(la - lb), la + lb + 1, 2):
                    c = _angular(pa.channel, pb.channel, slot, big_l)
                    if c == 0:
                        continue
                    if prod is None:
                        prod = np.conj(_radial(pa, slot)) * _radial(pb, slot)
                    key = (big_l, (pb.channel.two_m - pa.channel.two_m) // 2)
                    out[key] = out.get(key, 0.0) + c * prod
    return out


def density(q: FiniteRankState) -> Density:
    """rho_Q = Tr_C4 Q(x, x) as multipoles."""
    mesh = q.mesh
    out: dict = {}
    for lam, f in q.entries:
        for key, prof in pair_density(f, f).items():
            out[key] = out.get(key, 0.0) + lam * prof
    if mesh is None:
        mesh = RadialMesh.log(n=32)
    return Density(out, mesh)


def _pair(mesh: RadialMesh, m1: dict, m2: dict) -> complex:
    total = 0.0j
    for key, prof in m1.items():
        other = m2.get(key)
        if other is None:
            continue
        big_l = key[0]
        total += 4 * np.pi / (2 * big_l + 1) * (np.conj(prof) @ (mesh.coulomb_matrix(big_l) @ other))
    return total


def coulomb_pairing(rho1, rho2, mesh: RadialMesh | None = None) -> float:
    """D(rho1, rho2) for Density objects or radial density samples on ``mesh``."""
    if isinstance(rho1, Density):
        mesh = rho1.mesh
        m1 = rho1.multipoles
    else:
        m1 = {(0, 0): np.sqrt(4 * np.pi) * np.asarray(rho1, dtype=complex)}
    if isinstance(rho2, Density):
        mesh = mesh or rho2.mesh
        m2 = rho2.multipoles
    elif isinstance(rho2, ExternalDensity):
        mesh = mesh or rho2.mesh
        m2 = rho2.multipoles()
    else:
        m2 = {(0, 0): np.sqrt(4 * np.pi) * np.asarray(rho2, dtype=complex)}
    if mesh is None:
        raise ValueError("a mesh is needed for raw radial densities")
    return float(np.real(_pair(mesh, m1, m2)))


def _gram(orbs: Sequence) -> np.ndarray:
    n = len(orbs)
    s = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            s[i, j] = orbital_inner(orbs[i], orbs[j])
            s[j, i] = np.conj(s[i, j])
    return s


def exchange_cross(q1: FiniteRankState, q2: FiniteRankState) -> float:
    """Re int int Tr(Q1(x,y) Q2(x,y)^+) / |x-y|."""
    if not q1.entries or not q2.entries:
        return 0.0
    mesh = q1.mesh
    total = 0.0
    for lam, f in q1.entries:
        for mu, g in q2.entries:
            rho = pair_density(f, g)
            total += lam * mu * float(np.real(_pair(mesh, rho, rho)))
    return total


def exchange_norm(q: FiniteRankState) -> float:
    """int int |Q(x,y)|^2 / |x-y| by pairwise multipole assembly."""
    if not q.entries:
        return 0.0
    mesh = q.mesh
    ent = q.entries
    total = 0.0
    for i, (li, fi) in enumerate(ent):
        for j in range(i, len(ent)):
            lj, fj = ent[j]
            rho = pair_density(fi, fj)
            val = float(np.real(_pair(mesh, rho, rho)))
            total += (1 if i == j else 2) * li * lj * val
    return total


# ---------------------------------------------------------------------------
# kinetic traces


def kinetic_trace(q: FiniteRankState) -> float:
    """Tr(D0 Q) = sum lam_i <D0 f_i, f_i> on the finite-rank block."""
    d = q.dispersion
    return float(sum(lam * sum(d0_expectation(p, d) for p in f) for lam, f in q.entries))


def _square_trace(q: FiniteRankState, weight) -> float:
    """Tr(W Q^2) = sum_ij lam_i lam_j <f_i,f_j> <f_j, W f_i> for a channel multiplier W."""
    orbs = q.orbitals
    lam = q.coefficients
    if not orbs:
        return 0.0
    s = _gram(orbs)
    mo = [{p.channel: to_momentum(p) for p in f} for f in orbs]
    n = len(orbs)
    wmat = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            acc = 0.0j
            for ch, a in mo[j].items():
                b = mo[i].get(ch)
                if b is None:
                    continue
                wt = weight(a.mesh.r)
                acc += a.mesh.inner(a.upper, wt * b.upper) + a.mesh.inner(a.lower, wt * b.lower)
            wmat[j, i] = acc
    return float(np.real(np.einsum("i,j,ij,ji->", lam, lam, s, wmat)))


def gradient_square_trace(q: FiniteRankState) -> float:
    """Tr(|grad| Q^2)."""
    return _square_trace(q, lambda p: p)


def abs_kinetic_square_trace(q: FiniteRankState) -> float:
    """Tr(|D0| Q^2)."""
    d = q.dispersion

    def weight(p):
        g0, g1, inside = d.multipliers(p)
        return np.hypot(g0, g1) * inside

    return _square_trace(q, weight)


def hs_distance_sq(q1: FiniteRankState, q2: FiniteRankState) -> float:
    """||Q1 - Q2||_HS^2 from Gram matrices."""
    orbs = q1.orbitals + q2.orbitals
    lam = np.concatenate([q1.coefficients, -q2.coefficients]) if orbs else np.zeros(0)
    if not orbs:
        return 0.0
    s = _gram(orbs)
    return float(np.real(np.einsum("i,j,ij,ji->", lam, lam, s, s)))


def block_eigenvalues(q: FiniteRankState) -> np.ndarray:
    """Eigenvalues of Q restricted to the span of its orbitals."""
    if not q.entries:
        return np.zeros(0)
    s = _gram(q.orbitals)
    w, u = np.linalg.eigh(s)
    keep = w > 1e-12 * max(w.max(), 1e-300)
    half = u[:, keep] * np.sqrt(w[keep])
    mat = half.conj().T @ np.diag(q.coefficients) @ half
    return np.linalg.eigvalsh(0.5 * (mat + mat.conj().T))


# ---------------------------------------------------------------------------
# energy


def bdf_energy(
    q: FiniteRankState,
    nu: ExternalDensity | None = None,
    penalty: tuple | None = None,
    alpha: float | None = None,
) -> EnergyBreakdown:
    """Kinetic, direct, external, exchange and optional penalty eta ||Q - A||_HS^2."""
    alpha = q.dispersion.alpha if alpha is None else alpha
    if alpha >= 4 / np.pi:
        raise RegimeViolation(f"alpha = {alpha} is not below 4/pi")
    if not q.entries:
        pen = 0.0
        if penalty is not None:
            eta, ref = penalty
            pen = eta * hs_distance_sq(q, ref)
        return EnergyBreakdown(0.0, 0.0, 0.0, 0.0, pen)
    kin = kinetic_trace(q)
    rho = density(q)
    direct = 0.5 * alpha * coulomb_pairing(rho, rho)
    external = 0.0
    if nu is not None:
        external = -alpha * coulomb_pairing(rho, nu)
    exch = -0.5 * alpha * exchange_norm(q)
    pen = 0.0
    if penalty is not None:
        eta, ref = penalty
        pen = eta * hs_distance_sq(q, ref)
    return EnergyBreakdown(kin, direct, external, exch, pen)


# ---------------------------------------------------------------------------
# mean-field operator


def _potential(mesh: RadialMesh, multipoles: dict) -> dict:
    """Coulomb potential multipoles U_LM(r), consistent with the pairing matrices."""
    return {
        key: 4 * np.pi / (2 * key[0] + 1) * (mesh.coulomb_matrix(key[0]) @ prof) / mesh.w
        for key, prof in multipoles.items()
    }


def _multiply_project(f, pot: dict, targets: Iterable[AngularChannel], out: dict, coef: complex = 1.0) -> None:
    """Accumulate the projection of U(x) f(x) onto the target channels."""
    for t in targets:
        acc = out[t]
        for pa in as_orbital(f):
            for slot in (0, 1):
                la = _slot_ells(pa.channel)[slot]
                lt = _slot_ells(t)[slot]
                big_m = (t.two_m - pa.channel.two_m) // 2
                for big_l in range(abs(la - lt), la + lt + 1, 2):
                    u = pot.get((big_l, big_m))
                    if u is None:
                        continue
                    c = _angular(pa.channel, t, slot, big_l)
                    if c == 0:
                        continue
                    acc[slot] += coef * np.conj(c) * u * _radial(pa, slot)


def mean_field_apply(q: FiniteRankState, psi, targets: Sequence[AngularChannel] | None = None) -> Orbital:
    """Pi_Lambda (D0 psi + alpha (rho_Q * 1/|x|) psi - alpha R_Q psi), per target channel."""
    d = q.dispersion
    psi = as_orbital(psi)
    mesh = _mesh_of(psi)
    if targets is None:
        targets = sorted({p.channel for p in psi} | set(q.channels()))
    targets = list(targets)
    n = len(mesh.r)
    acc = {t: [np.zeros(n, dtype=complex), np.zeros(n, dtype=complex)] for t in targets}
    alpha = d.alpha
    if q.entries and alpha:
        pot = _potential(mesh, density(q).multipoles)
        _multiply_project(psi, pot, targets, acc, alpha)
        for lam, f in q.entries:
            w = _potential(mesh, pair_density(f, psi))
            _multiply_project(f, w, targets, acc, -alpha * lam)
    out = []
    pmap = {p.channel: p for p in psi}
    for t in targets:
        up, lo = acc[t]
        part = ChannelOrbital(t, up, lo, mesh)
        part = _cutoff(part, d)
        if t in pmap:
            part = part + apply_d0(pmap[t], d)
        out.append(part)
    return tuple(out)


def _cutoff(p: ChannelOrbital, d: DressedDispersion) -> ChannelOrbital:
    mo = to_momentum(p)
    inside = mo.mesh.r <= d.cutoff
    return from_momentum(MomentumOrbital(mo.channel, mo.upper * inside, mo.lower * inside, mo.mesh), p.mesh)


# ---------------------------------------------------------------------------
# closed forms


def loop_state(psi: ChannelOrbital, s: float, d: DressedDispersion) -> FiniteRankState:
    """c(s) = |sin(pi s) psi + cos(pi s) I_s psi><.| - |I_s psi><I_s psi|."""
    ipsi = inversion_orbital(psi)
    a, b = np.sin(np.pi * s), np.cos(np.pi * s)
    top = orbital_add(orbital_scale(psi, a), orbital_scale(ipsi, b))
    return FiniteRankState(((1.0, top), (-1.0, ipsi)), d, "Is")


def loop_energy(psi: ChannelOrbital, s: float, d: DressedDispersion, alpha: float | None = None) -> float:
    """Energy along the loop through the I_s-pair of a unit psi in Ran P+.

    With sigma = psi^+ I_s psi (purely imaginary) the density vanishes and the
    exchange norm of c(s) is 2 sin^2(pi s) (D(|psi|^2) - D(sigma, sigma)).
    """
    alpha = d.alpha if alpha is None else alpha
    psi = as_orbital(psi)
    st2 = np.sin(np.pi * s) ** 2
    if st2 == 0.0:
        return 0.0
    kin = sum(abs_d0_expectation(p, d) for p in psi)
    dens = pair_density(psi, psi)
    sig = pair_density(psi, inversion_orbital(psi))
    mesh = _mesh_of(psi)
    d_rho = float(np.real(_pair(mesh, dens, dens)))
    d_sig = float(np.real(_pair(mesh, sig, sig)))
    return float(2 * st2 * kin - alpha * st2 * (d_rho - d_sig))


def cpair_closed_form(orbitals: Sequence, d: DressedDispersion, alpha: float | None = None) -> dict:
    """Energy of N - C N C for N = sum |psi_k><psi_k| with orthonormal psi_k in Ran P+.

    2 Tr(|D0| N) - alpha ||N||^2 + alpha Re Tr(N R[C N C]).
    """
    alpha = d.alpha if alpha is None else alpha
    orbitals = [as_orbital(f) for f in orbitals]
    n_state = FiniteRankState(tuple((1.0, f) for f in orbitals), d)
    nc_state = FiniteRankState(tuple((1.0, conjugate_orbital(f)) for f in orbitals), d)
    kin = 2 * sum(abs_d0_expectation(p, d) for f in orbitals for p in f)
    self_x = exchange_norm(n_state)
    cross = exchange_cross(n_state, nc_state)
    return {
        "kinetic": kin,
        "exchange_self": self_x,
        "exchange_cross": cross,
        "total": kin - alpha * self_x + alpha * cross,
    }


# ---------------------------------------------------------------------------
# trial states


def _dilated_meshes(profile_mesh: RadialMesh, scale: float, p_max: float):
    r = profile_mesh.r
    return paired_meshes(scale, len(r), r[0], r[-1], r[0], p_max)


def _positive_part(p: ChannelOrbital, d: DressedDispersion) -> tuple[ChannelOrbital, float]:
    mo = to_momentum(p, cutoff=d.cutoff)
    before = mo.norm()
    proj = project_positive(mo, d)
    after = proj.norm()
    loss = 1.0 - after / before
    proj = proj.scaled(1.0 / after)
    return from_momentum(proj, p.mesh), float(loss)


def build_pekar_trial(
    d: DressedDispersion, pekar: NRResult, max_loss: float = 0.2, p_max: float = 10.0
) -> FiniteRankState:
    """|psi0><psi0| - |I_s psi0><I_s psi0| from the dilated Pekar profile.

    The profile is read on its own log mesh, so the dilation by
    lambda = g1'(0)^2/(alpha m) maps nodes onto nodes without interpolation.
    The momentum mesh stops at ``p_max`` in units of the undilated profile.
    The projection loss is kept in ``info``.
    """
    if d.alpha <= 0:
        raise ValueError("the dilation needs alpha > 0")
    lam = d.nonrel_scale()
    rmesh, _ = _dilated_meshes(pekar.mesh, lam, p_max)
    prof = np.asarray(pekar.profile, dtype=float) * lam**-1.5
    ch = AngularChannel(1, 1, -1)
    raw = ChannelOrbital.pure_upper(ch, prof, rmesh)
    psi, loss = _positive_part(raw, d)
    if loss > max_loss:
        raise ProjectionLoss(f"positive projection removed {loss:.1%} of the norm")
    info = {"projection_loss": loss, "scale": lam, "orbital": psi}
    return FiniteRankState(((1.0, (psi,)), (-1.0, (psi.inversion_partner(),))), d, "Is", info)


def build_multiplet_trial(
    d: DressedDispersion, nr: NRResult, prob: NRChannelProblem, max_loss: float = 0.2, p_max: float = 10.0
) -> FiniteRankState:
    """sum_m |psi_m><psi_m| - |C psi_m><C psi_m| for the multiplet of the channel problem."""
    if d.alpha <= 0:
        raise ValueError("the dilation needs alpha > 0")
    lam = d.nonrel_scale()
    rmesh, _ = _dilated_meshes(nr.mesh, lam, p_max)
    prof = np.asarray(nr.profile, dtype=float) * lam**-1.5
    entries = []
    losses = []
    members = []
    for two_m in range(-prob.two_j0, prob.two_j0 + 1, 2):
        ch = AngularChannel(prob.two_j0, two_m, prob.eps)
        psi, loss = _positive_part(ChannelOrbital.pure_upper(ch, prof, rmesh), d)
        losses.append(loss)
        members.append(psi)
        entries.append((1.0, (psi,)))
    if max(losses) > max_loss:
        raise ProjectionLoss(f"positive projection removed {max(losses):.1%} of the norm")
    entries += [(-1.0, (psi.charge_conjugated(),)) for psi in members]
    info = {"projection_loss": max(losses), "scale": lam, "orbitals": members}
    return FiniteRankState(tuple(entries), d, "W", info)


def random_admissible_state(
    d: DressedDispersion,
    rng: np.random.Generator,
    mesh: RadialMesh,
    n_plus: int = 2,
    n_minus: int = 2,
    channels: Sequence[AngularChannel] | None = None,
    width: float = 2.0,
) -> FiniteRankState:
    """Random Q with orthonormal electron orbitals in Ran P+ and hole orbitals in Ran P-.

    Coefficients are drawn in (0, 1] for electrons and [-1, 0) for holes, so
    -P- <= Q <= P+ holds exactly.
    """
    channels = list(channels or [AngularChannel(1, 1, -1), AngularChannel(1, 1, 1), AngularChannel(3, -1, 1)])
    r = mesh.r

    def random_orbital(project):
        parts = []
        for ch in rng.choice(len(channels), size=min(2, len(channels)), replace=False):
            ch = channels[int(ch)]
            env = np.exp(-(r / (width * rng.uniform(0.5, 2.0))) ** 2)
            up = (rng.normal() + 1j * rng.normal()) * r ** ch.ell_upper * env
            lo = (rng.normal() + 1j * rng.normal()) * r ** ch.ell_lower * env * rng.uniform(0.2, 1.0)
            parts.append(project(ChannelOrbital(ch, up, lo, mesh), d))
        return as_orbital(sorted(parts, key=lambda p: p.channel))

    def orthonormal(orbs):
        out = []
        for f in orbs:
            for g in out:
                f = orbital_add(f, orbital_scale(g, -orbital_inner(g, f)))
            out.append(orbital_scale(f, 1.0 / orbital_norm(f)))
        return out

    plus = orthonormal([random_orbital(project_positive) for _ in range(n_plus)])
    minus = orthonormal([random_orbital(project_negative) for _ in range(n_minus)])
    entries = [(rng.uniform(0.05, 1.0), f) for f in plus] + [(-rng.uniform(0.05, 1.0), f) for f in minus]
    return FiniteRankState(tuple(entries), d)
