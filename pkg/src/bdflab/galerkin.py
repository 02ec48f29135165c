"""Truncated orthonormal bases of channel orbitals and operators on them.

Radial functions are even-tempered Gaussians r^l exp(-r^2 / 2 s^2), whose
order-l Bessel transforms are s^{2l+3} p^l exp(-p^2 s^2 / 2), so position and
momentum samples are both exact.  Each (channel, slot) pair carries the
Gaussians of its orbital l, orthonormalized canonically.  The Coulomb
direct and exchange operators are assembled on a radial grid from the same
multipole algebra as the orbital-level evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gamma

from .dressing import DressedDispersion
from .energy import EnergyBreakdown, _angular, as_orbital
from .radial import RadialMesh
from .spinors import AngularChannel, ChannelOrbital, _conjugation_phases

__all__ = ["AngularSlot", "TruncatedBasis", "para_basis", "multiplet_basis", "vacuum_basis"]


@dataclass(frozen=True)
class AngularSlot:
    channel: AngularChannel
    slot: int
    ell: int
    start: int
    size: int

    @property
    def index(self) -> slice:
        return slice(self.start, self.start + self.size)


def _primitive_gram(widths: np.ndarray, ell: int) -> np.ndarray:
    a = 0.5 * (1.0 / widths[:, None] ** 2 + 1.0 / widths[None, :] ** 2)
    return 0.5 * gamma(ell + 1.5) * a ** -(ell + 1.5)


class TruncatedBasis:
    """Orthonormal basis over (channel, slot, radial index)."""

    def __init__(
        self,
        channels: Sequence[AngularChannel],
        dispersion: DressedDispersion,
        widths: np.ndarray,
        n_r: int = 260,
        n_p: int = 500,
        rcond: float = 1e-6,
    ) -> None:
        self.channels = tuple(channels)
        if len(set(self.channels)) != len(self.channels):
            raise ValueError("duplicate channels")
        self.dispersion = dispersion
        self.widths = np.sort(np.asarray(widths, dtype=float))
        s_min, s_max = self.widths[0], self.widths[-1]
        self.rmesh = RadialMesh.log(0.01 * s_min, 9.0 * s_max, n_r)
        p_top = min(dispersion.cutoff, 12.0 / s_min)
        self.pmesh = RadialMesh.log(1e-3 / s_max, p_top, n_p)
        ells = sorted({ch.ell_upper for ch in self.channels} | {ch.ell_lower for ch in self.channels})
        self._coef: dict[int, np.ndarray] = {}
        for ell in ells:
            gram = _primitive_gram(self.widths, ell)
            scale = 1.0 / np.sqrt(np.diag(gram))
            w, v = np.linalg.eigh(scale[:, None] * gram * scale[None, :])
            keep = w > rcond * w.max()
            self._coef[ell] = scale[:, None] * v[:, keep] / np.sqrt(w[keep])
        slots = []
        start = 0
        for ch in self.channels:
            for slot, ell in ((0, ch.ell_upper), (1, ch.ell_lower)):
                size = self._coef[ell].shape[1]
                slots.append(AngularSlot(ch, slot, ell, start, size))
                start += size
        self.slots = tuple(slots)
        self.dim = start
        self._slot_of = {(s.channel, s.slot): s for s in self.slots}
        self._rad = {ell: self.radial_values(ell, self.rmesh.r) for ell in ells}
        self._mom = {ell: self.momentum_values(ell, self.pmesh.r) for ell in ells}
        self._cache: dict = {}

    # -- radial functions ---------------------------------------------------

    def radial_values(self, ell: int, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        prim = r**ell * np.exp(-(r[None, :] ** 2) / (2 * self.widths[:, None] ** 2))
        return self._coef[ell].T @ prim

    def momentum_values(self, ell: int, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        s = self.widths[:, None]
        prim = s ** (2 * ell + 3) * p**ell * np.exp(-(p[None, :] ** 2) * s**2 / 2)
        return self._coef[ell].T @ prim

    def gram_residual(self, on_mesh: bool = False) -> float:
        """Departure from orthonormality; analytic overlaps unless ``on_mesh``."""
        worst = 0.0
        for ell, x in self._coef.items():
            if on_mesh:
                u = self._rad[ell]
                g = (u * self.rmesh.w) @ u.T
            else:
                g = x.T @ _primitive_gram(self.widths, ell) @ x
            worst = max(worst, float(np.max(np.abs(g - np.eye(len(g))))))
        return worst

    # -- conversions ----------------------------------------------------------

    def to_orbital(self, vec: np.ndarray, mesh: RadialMesh) -> tuple:
        """Channel orbitals sampled on ``mesh`` for a coefficient vector."""
        vec = np.asarray(vec, dtype=complex)
        parts = []
        for ch in self.channels:
            up_s = self._slot_of[(ch, 0)]
            dn_s = self._slot_of[(ch, 1)]
            cu, cd = vec[up_s.index], vec[dn_s.index]
            if not (np.any(cu) or np.any(cd)):
                continue
            up = cu @ self.radial_values(up_s.ell, mesh.r)
            lo = cd @ self.radial_values(dn_s.ell, mesh.r)
            parts.append(ChannelOrbital(ch, up, lo, mesh))
        return tuple(parts)

    def from_orbital(self, f) -> np.ndarray:
        """Coefficients of the orthogonal projection of an orbital onto the span."""
        out = np.zeros(self.dim, dtype=complex)
        for p in as_orbital(f):
            if (p.channel, 0) not in self._slot_of:
                continue
            for slot, prof in ((0, p.upper), (1, p.lower)):
                s = self._slot_of[(p.channel, slot)]
                out[s.index] = (self.radial_values(s.ell, p.mesh.r) * p.mesh.w) @ prof
        return out

    # -- one-body matrices ----------------------------------------------------

    def d0_matrix(self) -> np.ndarray:
        """Dressed Dirac operator; block diagonal over channels."""
        mat = self._cache.get("d0")
        if mat is None:
            d = self.dispersion
            g0, g1, inside = d.multipliers(self.pmesh.r)
            w = self.pmesh.w * inside
            mat = np.zeros((self.dim, self.dim))
            for ch in self.channels:
                su, sd = self._slot_of[(ch, 0)], self._slot_of[(ch, 1)]
                fu, fd = self._mom[su.ell], self._mom[sd.ell]
                mat[su.index, su.index] = (fu * w * g0) @ fu.T
                mat[sd.index, sd.index] = -(fd * w * g0) @ fd.T
                off = ch.eps * (fu * w * g1) @ fd.T
                mat[su.index, sd.index] = off
                mat[sd.index, su.index] = off.T
            mat = 0.5 * (mat + mat.T)
            self._cache["d0"] = mat
        return mat

    def d0_spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        hit = self._cache.get("d0eig")
        if hit is None:
            hit = np.linalg.eigh(self.d0_matrix())
            self._cache["d0eig"] = hit
        return hit

    def vacuum_projector(self) -> np.ndarray:
        """Negative spectral projector of the truncated dressed operator."""
        hit = self._cache.get("pminus")
        if hit is None:
            e, v = self.d0_spectrum()
            vm = v[:, e < 0]
            hit = vm @ vm.conj().T
            self._cache["pminus"] = hit
        return hit

    def positive_projector(self) -> np.ndarray:
        return np.eye(self.dim) - self.vacuum_projector()

    def abs_d0(self) -> np.ndarray:
        e, v = self.d0_spectrum()
        return (v * np.abs(e)) @ v.conj().T

    def c_matrix(self) -> np.ndarray:
        """U with C v = U conj(v); needs the channel list closed under conjugation."""
        hit = self._cache.get("C")
        if hit is None:
            hit = np.zeros((self.dim, self.dim), dtype=complex)
            for ch in self.channels:
                tgt = ch.conjugate()
                if (tgt, 0) not in self._slot_of:
                    raise ValueError(f"channel {tgt} missing for charge conjugation")
                ph_up, ph_dn = _conjugation_phases(ch)
                su, sd = self._slot_of[(ch, 0)], self._slot_of[(ch, 1)]
                tu, td = self._slot_of[(tgt, 0)], self._slot_of[(tgt, 1)]
                hit[td.index, su.index] = ph_up * np.eye(su.size)
                hit[tu.index, sd.index] = ph_dn * np.eye(sd.size)
            self._cache["C"] = hit
        return hit

    def is_matrix(self) -> np.ndarray:
        hit = self._cache.get("Is")
        if hit is None:
            hit = np.zeros((self.dim, self.dim), dtype=complex)
            for ch in self.channels:
                tgt = AngularChannel(ch.two_j, ch.two_m, -ch.eps)
                if (tgt, 0) not in self._slot_of:
                    raise ValueError(f"channel {tgt} missing for I_s")
                su, sd = self._slot_of[(ch, 0)], self._slot_of[(ch, 1)]
                tu, td = self._slot_of[(tgt, 0)], self._slot_of[(tgt, 1)]
                hit[td.index, su.index] = 1j * np.eye(su.size)
                hit[tu.index, sd.index] = 1j * np.eye(sd.size)
            self._cache["Is"] = hit
        return hit

    def apply_c(self, v: np.ndarray) -> np.ndarray:
        return self.c_matrix() @ np.conj(v)

    def conjugate_operator(self, x: np.ndarray) -> np.ndarray:
        """Matrix of C X C."""
        u = self.c_matrix()
        return u @ np.conj(x) @ np.conj(u)

    def inversion_operator(self, x: np.ndarray) -> np.ndarray:
        """Matrix of I_s X I_s^-1."""
        u = self.is_matrix()
        return u @ x @ u.conj().T

    def channel_labels(self) -> list[AngularChannel]:
        out = []
        for s in self.slots:
            out += [s.channel] * s.size
        return out

    # -- Coulomb ----------------------------------------------------------------

    def _angular_tables(self):
        hit = self._cache.get("ang")
        if hit is None:
            n_ang = len(self.slots)
            l_top = 2 * max(s.ell for s in self.slots)
            tables = {}
            for big_l in range(l_top + 1):
                tab = np.zeros((n_ang, n_ang), dtype=complex)
                for i, a in enumerate(self.slots):
                    for j, b in enumerate(self.slots):
                        if a.slot == b.slot:
                            tab[i, j] = _angular(a.channel, b.channel, a.slot, big_l)
                if np.any(tab):
                    tables[big_l] = tab
            dm = np.array([[(b.channel.two_m - a.channel.two_m) // 2 for b in self.slots] for a in self.slots])
            hit = (tables, dm)
            self._cache["ang"] = hit
        return hit

    def _exchange_coefficients(self):
        """Per L: coefficient tensor mapping Z_{gamma delta} to W_{alpha beta}."""
        hit = self._cache.get("xcoef")
        if hit is None:
            tables, dm = self._angular_tables()
            n = len(self.slots)
            hit = {}
            for big_l, tab in tables.items():
                c = 4 * np.pi / (2 * big_l + 1)
                # coef[a, b, g, d] = c conj(A[g, a]) A[d, b] when m_a - m_g = m_b - m_d
                coef = c * np.einsum("ga,db->abgd", np.conj(tab), tab)
                mask = dm.T[:, None, :, None] == dm.T[None, :, None, :]
                coef = np.where(mask, coef, 0.0)
                nz_in = np.flatnonzero(np.any(coef.reshape(n * n, n * n) != 0, axis=0))
                nz_out = np.flatnonzero(np.any(coef.reshape(n * n, n * n) != 0, axis=1))
                if len(nz_in) == 0:
                    continue
                hit[big_l] = (coef.reshape(n * n, n * n)[np.ix_(nz_out, nz_in)], nz_out, nz_in)
            self._cache["xcoef"] = hit
        return hit

    def _u(self, s: AngularSlot) -> np.ndarray:
        return self._rad[s.ell]

    def density_multipoles(self, q: np.ndarray) -> dict:
        """rho_Q multipoles on the internal radial grid."""
        tables, dm = self._angular_tables()
        out: dict = {}
        for big_l, tab in tables.items():
            for i, a in enumerate(self.slots):
                for j, b in enumerate(self.slots):
                    c = tab[j, i]  # A_{beta alpha}
                    if c == 0:
                        continue
                    blk = q[a.index, b.index]
                    prof = np.sum((blk.T @ self._u(a)) * self._u(b), axis=0)
                    key = (big_l, dm[j, i])  # M = m_alpha - m_beta
                    out[key] = out.get(key, 0.0) + c * prof
        return out

    def direct_matrix(self, q: np.ndarray) -> np.ndarray:
        """Matrix of (rho_Q * 1/|x|)."""
        tables, dm = self._angular_tables()
        mesh = self.rmesh
        pot = {
            key: 4 * np.pi / (2 * key[0] + 1) * (mesh.coulomb_matrix(key[0]) @ prof) / mesh.w
            for key, prof in self.density_multipoles(q).items()
        }
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for big_l, tab in tables.items():
            for i, a in enumerate(self.slots):
                for j, b in enumerate(self.slots):
                    c = tab[j, i]
                    if c == 0:
                        continue
                    u = pot.get((big_l, dm[j, i]))
                    if u is None:
                        continue
                    out[a.index, b.index] += np.conj(c) * (self._u(a) * (mesh.w * u)) @ self._u(b).T
        return out

    def exchange_matrix(self, q: np.ndarray) -> np.ndarray:
        """Matrix of R_Q, the operator with kernel Q(x, y)/|x - y|."""
        n = len(self.slots)
        nr = len(self.rmesh.r)
        mesh = self.rmesh
        z = {}
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for big_l, (coef, nz_out, nz_in) in self._exchange_coefficients().items():
            ml = mesh.coulomb_matrix(big_l)
            stack = np.empty((len(nz_in), nr, nr), dtype=complex)
            for k, idx in enumerate(nz_in):
                g, dl = divmod(int(idx), n)
                key = (g, dl)
                if key not in z:
                    sg, sd = self.slots[g], self.slots[dl]
                    z[key] = self._u(sg).T @ q[sg.index, sd.index] @ self._u(sd)
                stack[k] = z[key] * ml
            w = (coef @ stack.reshape(len(nz_in), nr * nr)).reshape(len(nz_out), nr, nr)
            for k, idx in enumerate(nz_out):
                a, b = divmod(int(idx), n)
                sa, sb = self.slots[a], self.slots[b]
                out[sa.index, sb.index] += self._u(sa) @ w[k] @ self._u(sb).T
        return out

    def mean_field(self, q: np.ndarray, alpha: float | None = None) -> np.ndarray:
        """D0 + alpha (rho_Q * 1/|x| - R_Q) on the truncation."""
        alpha = self.dispersion.alpha if alpha is None else alpha
        mat = self.d0_matrix() + alpha * (self.direct_matrix(q) - self.exchange_matrix(q))
        return 0.5 * (mat + mat.conj().T)

    def energy(self, q: np.ndarray, alpha: float | None = None) -> EnergyBreakdown:
        alpha = self.dispersion.alpha if alpha is None else alpha
        kin = float(np.real(np.trace(self.d0_matrix() @ q)))
        direct = 0.5 * alpha * float(np.real(np.trace(q @ self.direct_matrix(q))))
        exch = -0.5 * alpha * float(np.real(np.trace(q @ self.exchange_matrix(q))))
        return EnergyBreakdown(kin, direct, 0.0, exch)


def _widths(s_min: float, s_max: float, n_rad: int) -> np.ndarray:
    return np.geomspace(s_min, s_max, n_rad)


def para_basis(d: DressedDispersion, n_rad: int = 18, s_min: float | None = None, s_max: float | None = None,
               two_m: int = 1, **kw) -> TruncatedBasis:
    """The two j = 1/2 channels of one m, closed under I_s."""
    lam = d.nonrel_scale() if d.alpha > 0 else 10.0
    s_min = s_min if s_min is not None else max(0.15, 10.0 / d.cutoff)
    s_max = s_max if s_max is not None else 12.0 * lam
    chans = [AngularChannel(1, two_m, -1), AngularChannel(1, two_m, 1)]
    return TruncatedBasis(chans, d, _widths(s_min, s_max, n_rad), **kw)


def multiplet_basis(d: DressedDispersion, two_j: int = 1, n_rad: int = 16, s_min: float | None = None,
                    s_max: float | None = None, **kw) -> TruncatedBasis:
    """All channels of one j (both signs, every m): closed under C, I_s and SU(2)."""
    lam = d.nonrel_scale() if d.alpha > 0 else 10.0
    s_min = s_min if s_min is not None else max(0.15, 10.0 / d.cutoff)
    s_max = s_max if s_max is not None else 14.0 * lam
    chans = [AngularChannel(two_j, tm, e) for tm in range(-two_j, two_j + 1, 2) for e in (-1, 1)]
    return TruncatedBasis(chans, d, _widths(s_min, s_max, n_rad), **kw)


def vacuum_basis(d: DressedDispersion, n_rad: int = 60, two_j_max: int = 3, two_m: int = 1,
                 s_min: float | None = None, s_max: float | None = None, **kw) -> TruncatedBasis:
    """Channels j = 1/2 .. j_max at fixed m, n_rad radial functions per slot."""
    lam = d.nonrel_scale() if d.alpha > 0 else 10.0
    s_min = s_min if s_min is not None else max(0.15, 10.0 / d.cutoff)
    s_max = s_max if s_max is not None else 12.0 * lam
    chans = [AngularChannel(tj, two_m, e) for tj in range(1, two_j_max + 1, 2) for e in (-1, 1)]
    return TruncatedBasis(chans, d, _widths(s_min, s_max, n_rad), **kw)
