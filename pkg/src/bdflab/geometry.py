"""Projector-manifold geometry on a truncated basis.

Projectors are hermitian idempotent matrices.  The difference P1 - P0 splits
into +-1 directions and two-dimensional planes rotated by angles in (0, pi/2);
rotations are generated by block off-diagonal antihermitian matrices.  The
module also carries the angle on the I_s-isotropic sphere and the mod-2 labels
of the components of C-symmetric, rotation-equivariant projectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import schur

from .galerkin import TruncatedBasis
from .spinors import AngularChannel

__all__ = [
    "IsotropyViolation",
    "MaximalAngle",
    "SymmetryViolation",
    "NonEquivariant",
    "DifferenceDecomposition",
    "TangentDirection",
    "ComponentLabel",
    "decompose",
    "symmetry_pairing_check",
    "subspace_distance",
    "classify",
    "angle",
    "projector_angle",
    "exp_retraction",
    "build_tangent",
    "is_projector",
    "equivariance_residual",
    "type_index",
    "random_equivariant_tangent",
    "insert_multiplet",
]

_CLUSTER = 1e-12
_UNIT = 1e-9


class IsotropyViolation(ValueError):
    """<f, I_s f> is not zero."""


class MaximalAngle(ValueError):
    """A rotation angle equals pi/2, so the plane carries no unique generator."""


class SymmetryViolation(ValueError):
    pass


class NonEquivariant(ValueError):
    pass


def _herm(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.conj().T)


def is_projector(p: np.ndarray) -> float:
    """max(|P^2 - P|, |P - P^*|) entrywise."""
    return float(max(np.max(np.abs(p @ p - p)), np.max(np.abs(p - p.conj().T))))


def _outer(v: np.ndarray) -> np.ndarray:
    return np.outer(v, v.conj())


def _clusters(values: np.ndarray, tol: float) -> list[np.ndarray]:
    order = np.argsort(values)
    groups, cur = [], [order[0]] if len(order) else []
    for a, b in zip(order[:-1], order[1:]):
        if values[b] - values[a] <= tol:
            cur.append(b)
        else:
            groups.append(np.array(cur))
            cur = [b]
    if cur:
        groups.append(np.array(cur))
    return groups


# ---------------------------------------------------------------------------
# decomposition of P1 - P0


@dataclass(frozen=True, eq=False)
class DifferenceDecomposition:
    """P1 - P0 as +-1 directions plus rotated planes.

    ``planes`` holds (e_plus, e_minus, theta) with e_minus in Ran P0, e_plus in
    its complement and cos(theta) e_minus + sin(theta) e_plus in Ran P1.
    """

    plus: np.ndarray
    minus: np.ndarray
    planes: tuple
    base: np.ndarray = field(repr=False)
    clusters: tuple = ()

    @property
    def dim(self) -> int:
        return self.base.shape[0]

    @property
    def angles(self) -> np.ndarray:
        return np.array([th for _, _, th in self.planes])

    @property
    def is_empty(self) -> bool:
        return self.plus.shape[1] == 0 and self.minus.shape[1] == 0 and not self.planes

    def plane_vectors(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvectors f_k, f_-k of P1 - P0 for +-sin(theta_k)."""
        ep, em, th = self.planes[k]
        lam = np.sin(th)
        a, b = np.sqrt((1 + lam) / 2), np.sqrt((1 - lam) / 2)
        return a * ep + b * em, a * em - b * ep

    def reconstruct(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for v in self.plus.T:
            out += _outer(v)
        for v in self.minus.T:
            out -= _outer(v)
        for k, (_, _, th) in enumerate(self.planes):
            fp, fm = self.plane_vectors(k)
            out += np.sin(th) * (_outer(fp) - _outer(fm))
        return out

    def vectors(self) -> np.ndarray:
        cols = [self.plus, self.minus]
        for ep, em, _ in self.planes:
            cols.append(np.stack([ep, em], axis=1))
        return np.concatenate(cols, axis=1) if cols else np.zeros((self.dim, 0))


def decompose(p1: np.ndarray, p0: np.ndarray, inversion: np.ndarray | None = None,
              tol: float = 1e-10) -> DifferenceDecomposition:
    """Split P1 - P0; with ``inversion`` given, planes are chosen I_s-invariant."""
    p1 = np.asarray(p1, dtype=complex)
    p0 = np.asarray(p0, dtype=complex)
    lam, vec = np.linalg.eigh(_herm(p1 - p0))
    plus = vec[:, lam > 1 - _UNIT]
    minus = vec[:, lam < -1 + _UNIT]
    inner = (lam > tol) & (lam <= 1 - _UNIT)
    planes = []
    clusters = []
    if np.any(inner):
        idx = np.flatnonzero(inner)
        for grp in _clusters(lam[idx], _CLUSTER):
            sel = idx[grp]
            mu = float(np.mean(lam[sel]))
            basis = vec[:, sel]
            if inversion is not None:
                basis = _inversion_adapted(basis, mu, p0, inversion)
            if len(sel) > 1:
                clusters.append((mu, len(sel)))
            th = float(np.arcsin(np.clip(mu, 0.0, 1.0)))
            for f in basis.T:
                em = p0 @ f
                ep = f - em
                em /= np.linalg.norm(em)
                ep /= np.linalg.norm(ep)
                planes.append((ep, em, th))
    planes.sort(key=lambda x: x[2])
    return DifferenceDecomposition(plus, minus, tuple(planes), p0, tuple(clusters))


def _inversion_adapted(basis: np.ndarray, mu: float, p0: np.ndarray, inv: np.ndarray) -> np.ndarray:
    """Rotate an eigenbasis of E_mu so each plane Span(f, I_s f) is I_s-invariant.

    I_s maps E_mu onto E_-mu; composing with the plane partner map E_-mu -> E_mu
    gives a unitary on E_mu whose eigenvectors span invariant planes.
    """
    a, b = np.sqrt((1 + mu) / 2), np.sqrt((1 - mu) / 2)
    img = inv @ basis  # in E_-mu, f_- = a e_- - b e_+
    em = p0 @ img
    ep = img - em
    partner = (b / a) * em - (a / b) * ep  # f_+ = a e_+ + b e_- of the same plane
    u = basis.conj().T @ partner
    _, z = schur(u, output="complex")
    return basis @ z


def subspace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Sine of the largest principal angle between column spans (1 if dims differ)."""
    if a.shape[1] != b.shape[1]:
        return 1.0
    if a.shape[1] == 0:
        return 0.0
    qa, _ = np.linalg.qr(a)
    qb, _ = np.linalg.qr(b)
    # the residual form keeps full precision for nearly equal spans
    resid = qb - qa @ (qa.conj().T @ qb)
    return float(np.linalg.norm(resid, 2))


def _eigenspaces(delta: np.ndarray, tol: float) -> list[tuple[float, np.ndarray]]:
    lam, vec = np.linalg.eigh(_herm(delta))
    keep = np.abs(lam) > tol
    out = []
    if not np.any(keep):
        return out
    idx = np.flatnonzero(keep)
    for grp in _clusters(lam[idx], 1e-8):
        sel = idx[grp]
        out.append((float(np.mean(lam[sel])), vec[:, sel]))
    return out


def symmetry_pairing_check(p1: np.ndarray, p0: np.ndarray, symmetry: str, basis: TruncatedBasis,
                           tol: float = 1e-10) -> dict:
    """Observable consequences of C- or I_s-symmetry for the spectrum of P1 - P0.

    For C every eigenvalue in (-1, 1) other than 0 has even multiplicity; for
    I_s the map sends each eigenspace E_mu onto E_-mu.
    """
    if symmetry not in ("C", "Is"):
        raise ValueError("symmetry must be 'C' or 'Is'")
    spaces = _eigenspaces(np.asarray(p1) - np.asarray(p0), tol)
    report = {"symmetry": symmetry, "eigenvalues": [], "violations": []}
    for mu, v in spaces:
        entry = {"mu": mu, "multiplicity": v.shape[1]}
        if symmetry == "C":
            if abs(mu) < 1 - _UNIT and v.shape[1] % 2:
                report["violations"].append(mu)
            img = basis.c_matrix() @ np.conj(v)
        else:
            img = basis.is_matrix() @ v
        partner = next((w for nu, w in spaces if abs(nu + mu) < 1e-7), None)
        dist = 1.0 if partner is None else subspace_distance(img, partner)
        entry["pairing_distance"] = dist
        if symmetry == "Is" and dist > tol:
            report["violations"].append(mu)
        report["eigenvalues"].append(entry)
    report["ok"] = not report["violations"]
    return report


# ---------------------------------------------------------------------------
# rotations


@dataclass(frozen=True, eq=False)
class TangentDirection:
    """Antihermitian generator sum theta (|e+><e-| - |e-><e+|)."""

    generator: np.ndarray
    pairs: tuple = ()

    @classmethod
    def zero(cls, dim: int) -> "TangentDirection":
        return cls(np.zeros((dim, dim), dtype=complex))

    def off_diagonality(self, p: np.ndarray) -> float:
        """Size of the block-diagonal part with respect to P (zero for a tangent)."""
        a = self.generator
        q = np.eye(len(p)) - p
        return float(max(np.max(np.abs(p @ a @ p)), np.max(np.abs(q @ a @ q))))

    def antisymmetry(self) -> float:
        a = self.generator
        return float(np.max(np.abs(a + a.conj().T)))


def build_tangent(dec: DifferenceDecomposition, strict: bool = False) -> TangentDirection:
    """Generator A with exp(A) P0 exp(-A) = P1.

    Directions with eigenvalue +-1 are paired and turned by pi/2; ``strict``
    refuses them instead.
    """
    n = dec.dim
    a = np.zeros((n, n), dtype=complex)
    pairs = []
    for ep, em, th in dec.planes:
        th = float(np.clip(th, 1e-14, np.pi / 2 - 1e-14))
        a += th * (np.outer(ep, em.conj()) - np.outer(em, ep.conj()))
        pairs.append((ep, em, th))
    if dec.plus.shape[1] or dec.minus.shape[1]:
        if strict:
            raise MaximalAngle("difference has eigenvalues +-1")
        if dec.plus.shape[1] != dec.minus.shape[1]:
            raise MaximalAngle("unequal numbers of +1 and -1 directions: charge changes")
        for ep, em in zip(dec.plus.T, dec.minus.T):
            a += (np.pi / 2) * (np.outer(ep, em.conj()) - np.outer(em, ep.conj()))
            pairs.append((ep, em, np.pi / 2))
    return TangentDirection(a, tuple(pairs))


def _unitary(a: np.ndarray, t: float) -> np.ndarray:
    w, v = np.linalg.eigh(-1j * a)
    return (v * np.exp(1j * t * w)) @ v.conj().T


def exp_retraction(p: np.ndarray, t: float, a) -> np.ndarray:
    """exp(tA) P exp(-tA), computed from the spectral resolution of A."""
    gen = a.generator if isinstance(a, TangentDirection) else np.asarray(a)
    if t == 0:
        return np.array(p, dtype=complex)
    gen = 0.5 * (gen - gen.conj().T)
    u = _unitary(gen, t)
    return _herm(u @ p @ u.conj().T)


# ---------------------------------------------------------------------------
# angle on the I_s-isotropic sphere


def angle(f: np.ndarray, basis: TruncatedBasis, tol: float = 1e-8) -> float:
    """Angle of f in Span_R(e, I_s e) with e in the negative subspace, in [0, pi)."""
    f = np.asarray(f, dtype=complex)
    nrm = np.linalg.norm(f)
    if abs(nrm - 1) > tol:
        raise ValueError(f"f must be a unit vector (norm {nrm})")
    inv = basis.is_matrix()
    iso = np.vdot(f, inv @ f)
    if abs(iso) > tol:
        raise IsotropyViolation(f"<f, I_s f> = {abs(iso):.2e}")
    fm = basis.vacuum_projector() @ f
    fp = f - fm
    c = np.linalg.norm(fm)
    if c < 1e-15:
        return np.pi / 2
    e = fm / c
    s = np.vdot(inv @ e, fp)
    th = np.arctan2(s.real, c)
    return float(th % np.pi)


def projector_angle(p: np.ndarray, basis: TruncatedBasis) -> float:
    """Angle of the orbital of Ran P in the top eigenplane of P - P0.

    Equals pi/2 exactly when the difference has operator norm one.
    """
    delta = _herm(np.asarray(p) - basis.vacuum_projector())
    lam, vec = np.linalg.eigh(delta)
    f0 = vec[:, -1]
    fm = p @ f0
    nrm = np.linalg.norm(fm)
    if nrm < 1e-14 or lam[-1] < 1e-14:
        return 0.0
    fm = fm / nrm
    # strip any residual isotropy from roundoff before measuring
    return angle(fm, basis, tol=1e-6)


# ---------------------------------------------------------------------------
# components of the C-symmetric, rotation-equivariant set


@dataclass(frozen=True)
class ComponentLabel:
    """Polynomial over Z2 x Z2: {l: (t_plus, t_minus)} with l = j - 1/2."""

    coefficients: tuple = ()

    @classmethod
    def from_counts(cls, counts: dict) -> "ComponentLabel":
        coef = {}
        for (two_j, eps), b in counts.items():
            ell = (two_j - 1) // 2
            cur = list(coef.get(ell, (0, 0)))
            cur[0 if eps > 0 else 1] = (cur[0 if eps > 0 else 1] + b) % 2
            coef[ell] = tuple(cur)
        return cls(tuple(sorted((k, v) for k, v in coef.items() if v != (0, 0))))

    def as_dict(self) -> dict:
        return dict(self.coefficients)

    def triples(self) -> list[tuple[int, int, int]]:
        return [(ell, t[0], t[1]) for ell, t in self.coefficients]

    @property
    def is_zero(self) -> bool:
        return not self.coefficients

    def __str__(self) -> str:
        if self.is_zero:
            return "0"
        return " + ".join(f"({a},{b})X^{ell}" for ell, a, b in self.triples())


def equivariance_residual(x: np.ndarray, basis: TruncatedBasis) -> float:
    """Departure of X from the rotation-equivariant form delta_mm' X_(j,e),(j',e')."""
    groups: dict = {}
    for s in basis.slots:
        groups.setdefault((s.channel.two_j, s.channel.eps, s.slot), {})[s.channel.two_m] = s
    worst = 0.0
    for ka, ga in groups.items():
        for kb, gb in groups.items():
            ref = None
            for ma, sa in ga.items():
                for mb, sb in gb.items():
                    blk = x[sa.index, sb.index]
                    if ma != mb or ka[0] != kb[0]:
                        worst = max(worst, float(np.max(np.abs(blk), initial=0.0)))
                    elif ref is None:
                        ref = blk
                    else:
                        worst = max(worst, float(np.max(np.abs(blk - ref), initial=0.0)))
    return worst


def _type_counts(delta: np.ndarray, basis: TruncatedBasis, value: float, tol: float) -> dict:
    lam, vec = np.linalg.eigh(delta)
    sel = vec[:, np.abs(lam - value) < tol]
    diag = np.real(np.sum(np.abs(sel) ** 2, axis=1))
    labels = basis.channel_labels()
    counts: dict = {}
    for ch, w in zip(labels, diag):
        key = (ch.two_j, ch.eps)
        counts[key] = counts.get(key, 0.0) + w
    out = {}
    for (two_j, eps), dim in counts.items():
        b = dim / (two_j + 1)
        if abs(b - round(b)) > 1e-6:
            raise NonEquivariant(f"type ({two_j}/2,{eps:+d}) carries a fractional count {b:.6f}")
        out[(two_j, eps)] = int(round(b))
    return out


def type_index(p: np.ndarray, basis: TruncatedBasis, tol: float = 1e-8) -> dict:
    """Per type (2j, eps): irreducibles at eigenvalue +1 minus those at -1.

    Integer valued and constant along parity-preserving paths, where the
    +1 and -1 directions of one type can only leave in pairs.
    """
    delta = _herm(np.asarray(p, dtype=complex) - basis.vacuum_projector())
    up = _type_counts(delta, basis, 1.0, tol)
    down = _type_counts(delta, basis, -1.0, tol)
    return {k: up.get(k, 0) - down.get(k, 0) for k in sorted(set(up) | set(down)) if up.get(k, 0) != down.get(k, 0)}


def random_equivariant_tangent(p: np.ndarray, basis: TruncatedBasis, rng: np.random.Generator,
                               scale: float = 1.0, mix_types: bool = False) -> np.ndarray:
    """Random tangent at P that commutes with rotations and with C.

    Blocks repeat over m within each j; unless ``mix_types`` is set the two
    channel signs of one j are not coupled, which is the parity-preserving case.
    """
    n = basis.dim
    a = np.zeros((n, n), dtype=complex)
    groups: dict = {}
    for s in basis.slots:
        groups.setdefault((s.channel.two_j, s.channel.eps, s.slot), {})[s.channel.two_m] = s
    for ka, ga in groups.items():
        for kb, gb in groups.items():
            if ka[0] != kb[0] or (ka[1] != kb[1] and not mix_types):
                continue
            some_a, some_b = next(iter(ga.values())), next(iter(gb.values()))
            x = rng.normal(size=(some_a.size, some_b.size)) + 1j * rng.normal(size=(some_a.size, some_b.size))
            for m, sa in ga.items():
                a[sa.index, gb[m].index] = x
    a = a - a.conj().T
    a = a + basis.conjugate_operator(a)
    q = np.eye(n) - p
    a = p @ a @ q + q @ a @ p
    return scale * a / np.linalg.norm(a, 2)


def insert_multiplet(p: np.ndarray, basis: TruncatedBasis, two_j: int, eps: int,
                     rng: np.random.Generator) -> np.ndarray:
    """P + sum_m |w_m><w_m| - |C w_m><C w_m| for one random positive multiplet of type (j, eps).

    The radial coefficients are shared by all m, so equivariance is kept; each
    w_m is projected onto the positive subspace and orthogonalized against Ran P.
    """
    slots = {}
    for two_m in range(-two_j, two_j + 1, 2):
        ch = AngularChannel(two_j, two_m, eps)
        if (ch, 0) not in basis._slot_of:
            raise ValueError(f"basis has no channel {ch}")
        slots[two_m] = (basis._slot_of[(ch, 0)], basis._slot_of[(ch, 1)])
    size_up, size_dn = slots[two_j][0].size, slots[two_j][1].size
    cu = rng.normal(size=size_up)
    cd = rng.normal(size=size_dn)
    pos = basis.positive_projector()
    cmat = basis.c_matrix()
    p = np.array(p, dtype=complex)
    for two_m, (su, sd) in slots.items():
        v = np.zeros(basis.dim, dtype=complex)
        v[su.index] = cu
        v[sd.index] = cd
        w = pos @ v
        w = w - p @ w
        w = w / np.linalg.norm(w)
        cw = cmat @ np.conj(w)
        p = p + _outer(w) - _outer(cw)
    return _herm(p)


def classify(p: np.ndarray, basis: TruncatedBasis, tol: float = 1e-8) -> ComponentLabel:
    """Mod-2 counts of irreducible types (j, eps) in Ker(P - P0 - 1)."""
    p = np.asarray(p, dtype=complex)
    delta = _herm(p - basis.vacuum_projector())
    if basis.channels and {ch.conjugate() for ch in basis.channels} <= set(basis.channels):
        c_res = float(np.max(np.abs(basis.conjugate_operator(delta) + delta)))
        if c_res > 1e-8:
            raise SymmetryViolation(f"-C Q C differs from Q by {c_res:.2e}")
    else:
        raise SymmetryViolation("basis is not closed under charge conjugation")
    eq = equivariance_residual(delta, basis)
    if eq > 1e-8:
        raise NonEquivariant(f"difference is not rotation-equivariant ({eq:.2e})")
    return ComponentLabel.from_counts(_type_counts(delta, basis, 1.0, tol))
