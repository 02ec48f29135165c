"""Four-spinor algebra, the symmetries C and I_s, and spherical-spinor channels.

Half-integers are carried as doubled integers (``two_j``, ``two_m``).  A channel
(j, m, eps) pairs the upper orbital l = j + eps/2 with the lower orbital
l = j - eps/2; its basis spinors are (i Psi^m_{l_up}, 0) and (0, Psi^m_{l_dn}).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import sph_harm_y

from .radial import RadialMesh

__all__ = [
    "AngularChannel",
    "ChannelOrbital",
    "charge_conjugate",
    "apply_is",
    "spherical_harmonic",
    "spherical_spinor",
    "channel_spinor",
    "multiplet_density",
    "radial_kinetic_coupling",
    "sphere_rule",
    "random_directions",
    "SIGMA",
    "ALPHA",
    "BETA",
]

SIGMA = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)
BETA = np.diag([1.0, 1.0, -1.0, -1.0]).astype(complex)
ALPHA = np.zeros((3, 4, 4), dtype=complex)
ALPHA[:, :2, 2:] = SIGMA
ALPHA[:, 2:, :2] = SIGMA


def charge_conjugate(s: np.ndarray) -> np.ndarray:
    """C s = (conj s4, -conj s3, -conj s2, conj s1) along the last axis."""
    s = np.asarray(s, dtype=complex)
    out = np.empty_like(s)
    out[..., 0] = np.conj(s[..., 3])
    out[..., 1] = -np.conj(s[..., 2])
    out[..., 2] = -np.conj(s[..., 1])
    out[..., 3] = np.conj(s[..., 0])
    return out


def apply_is(s: np.ndarray) -> np.ndarray:
    """I_s (phi, chi) = (-chi, phi); squares to minus the identity."""
    s = np.asarray(s, dtype=complex)
    out = np.empty_like(s)
    out[..., :2] = -s[..., 2:]
    out[..., 2:] = s[..., :2]
    return out


@dataclass(frozen=True, order=True)
class AngularChannel:
    """Angular channel with doubled quantum numbers; ``eps`` is +1 or -1."""

    two_j: int
    two_m: int
    eps: int

    def __post_init__(self) -> None:
        if self.two_j < 1 or self.two_j % 2 != 1:
            raise ValueError(f"2j must be a positive odd integer, got {self.two_j}")
        if abs(self.two_m) > self.two_j or (self.two_m - self.two_j) % 2:
            raise ValueError(f"invalid 2m={self.two_m} for 2j={self.two_j}")
        if self.eps not in (1, -1):
            raise ValueError("eps must be +1 or -1")

    @property
    def j(self) -> float:
        return self.two_j / 2

    @property
    def m(self) -> float:
        return self.two_m / 2

    @property
    def kappa(self) -> float:
        return self.eps * (self.two_j + 1) / 2

    @property
    def ell_upper(self) -> int:
        return (self.two_j + self.eps) // 2

    @property
    def ell_lower(self) -> int:
        return (self.two_j - self.eps) // 2

    def conjugate(self) -> "AngularChannel":
        """Channel reached by charge conjugation."""
        return AngularChannel(self.two_j, -self.two_m, -self.eps)

    def __str__(self) -> str:
        sign = "+" if self.eps > 0 else "-"
        return f"({self.two_j}/2,{self.two_m}/2,{sign})"


def spherical_harmonic(ell: int, m: int, theta, phi) -> np.ndarray:
    """Y_l^m with the Condon-Shortley phase; zero when |m| > l."""
    theta = np.asarray(theta, dtype=float)
    if abs(m) > ell:
        return np.zeros(np.broadcast(theta, phi).shape, dtype=complex)
    return sph_harm_y(ell, m, theta, phi)


def _angles(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = np.asarray(n, dtype=float)
    nrm = np.linalg.norm(n, axis=-1)
    theta = np.arccos(np.clip(n[..., 2] / nrm, -1.0, 1.0))
    phi = np.arctan2(n[..., 1], n[..., 0])
    return theta, phi


def spherical_spinor(two_j: int, two_m: int, ell: int, n: np.ndarray) -> np.ndarray:
    """Spin spherical harmonic Psi^m_l at directions ``n`` (shape (..., 3)) -> (..., 2)."""
    if abs(two_m) > two_j or (two_m - two_j) % 2 or two_j < 1:
        raise ValueError("channel out of range")
    if 2 * ell not in (two_j - 1, two_j + 1):
        raise ValueError("ell must equal j - 1/2 or j + 1/2")
    theta, phi = _angles(n)
    j, m = two_j / 2, two_m / 2
    lo = spherical_harmonic(ell, (two_m - 1) // 2, theta, phi)
    hi = spherical_harmonic(ell, (two_m + 1) // 2, theta, phi)
    if 2 * ell == two_j - 1:
        c1, c2 = np.sqrt(j + m), np.sqrt(j - m)
        norm = np.sqrt(2 * j)
    else:
        c1, c2 = np.sqrt(j + 1 - m), -np.sqrt(j + 1 + m)
        norm = np.sqrt(2 * j + 2)
    return np.stack([c1 * lo, c2 * hi], axis=-1) / norm


def channel_spinor(channel: AngularChannel, component: int, n: np.ndarray) -> np.ndarray:
    """Angular 4-spinor of a channel: component 0 -> (i Psi_up, 0), 1 -> (0, Psi_dn)."""
    n = np.asarray(n, dtype=float)
    out = np.zeros(n.shape[:-1] + (4,), dtype=complex)
    if component == 0:
        out[..., :2] = 1j * spherical_spinor(channel.two_j, channel.two_m, channel.ell_upper, n)
    elif component == 1:
        out[..., 2:] = spherical_spinor(channel.two_j, channel.two_m, channel.ell_lower, n)
    else:
        raise ValueError("component must be 0 (upper) or 1 (lower)")
    return out


def multiplet_density(two_j: int, ell: int, n: np.ndarray) -> np.ndarray:
    """Sum over m of |Psi^m_l(n)|^2; constant (2j+1)/(4 pi) on the sphere."""
    total = 0.0
    for two_m in range(-two_j, two_j + 1, 2):
        psi = spherical_spinor(two_j, two_m, ell, n)
        total = total + np.sum(np.abs(psi) ** 2, axis=-1)
    return total


def sphere_rule(n: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre in cos(theta) times a uniform phi grid; exact for degree < 2n."""
    x, wx = np.polynomial.legendre.leggauss(n)
    phi = np.arange(2 * n) * (np.pi / n)
    st = np.sqrt(1.0 - x**2)
    pts = np.stack(
        [np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(x, np.ones_like(phi))],
        axis=-1,
    ).reshape(-1, 3)
    wts = np.outer(wx, np.full(2 * n, np.pi / n)).ravel()
    return pts, wts


def random_directions(count: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(count, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class ChannelOrbital:
    """One partial wave: psi(x) = upper(r) (i Psi_up, 0) + lower(r) (0, Psi_dn)."""

    channel: AngularChannel
    upper: np.ndarray
    lower: np.ndarray
    mesh: RadialMesh

    def __post_init__(self) -> None:
        up = np.asarray(self.upper, dtype=complex)
        lo = np.asarray(self.lower, dtype=complex)
        if up.shape != self.mesh.r.shape or lo.shape != self.mesh.r.shape:
            raise ValueError("radial samples must match the mesh")
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "lower", lo)

    @classmethod
    def pure_upper(cls, channel: AngularChannel, a: np.ndarray, mesh: RadialMesh) -> "ChannelOrbital":
        return cls(channel, a, np.zeros_like(a, dtype=complex), mesh)

    def norm(self) -> float:
        return float(np.sqrt(self.mesh.integrate(np.abs(self.upper) ** 2 + np.abs(self.lower) ** 2)))

    def scaled(self, c: complex) -> "ChannelOrbital":
        return ChannelOrbital(self.channel, c * self.upper, c * self.lower, self.mesh)

    def normalized(self) -> "ChannelOrbital":
        return self.scaled(1.0 / self.norm())

    def __add__(self, other: "ChannelOrbital") -> "ChannelOrbital":
        if other.channel != self.channel or other.mesh is not self.mesh:
            raise ValueError("orbitals live in different channels or meshes")
        return ChannelOrbital(self.channel, self.upper + other.upper, self.lower + other.lower, self.mesh)

    def inner(self, other: "ChannelOrbital") -> complex:
        """<self, other>, zero across channels."""
        if other.channel != self.channel:
            return 0.0j
        return self.mesh.inner(self.upper, other.upper) + self.mesh.inner(self.lower, other.lower)

    def charge_conjugated(self) -> "ChannelOrbital":
        """C applied channel-wise; lands in (j, -m, -eps).

        With Psi^{-m}_l = s conj-partner of Psi^m_l, C(a (i Psi_up, 0)) equals
        a phase times conj(a) (0, Psi'_dn) of the conjugate channel.  The phases
        are read off numerically at a reference direction so that the radial
        bookkeeping stays exact.
        """
        target = self.channel.conjugate()
        ph_up, ph_dn = _conjugation_phases(self.channel)
        return ChannelOrbital(target, ph_dn * np.conj(self.lower), ph_up * np.conj(self.upper), self.mesh)

    def inversion_partner(self) -> "ChannelOrbital":
        """I_s applied channel-wise; lands in (j, m, -eps)."""
        target = AngularChannel(self.channel.two_j, self.channel.two_m, -self.channel.eps)
        # I_s(a (iPsi_up,0) + b (0,Psi_dn)) = (-b Psi_dn, i a Psi_up)
        # = (i b)(i Psi'_up, 0) + (i a)(0, Psi'_dn) in the flipped channel.
        return ChannelOrbital(target, 1j * self.lower, 1j * self.upper, self.mesh)

    def values(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the 4-spinor at Cartesian points x (..., 3)."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        up = self.mesh.interpolate(self.upper, r)
        lo = self.mesh.interpolate(self.lower, r)
        return (up[..., None] * channel_spinor(self.channel, 0, x)
                + lo[..., None] * channel_spinor(self.channel, 1, x))


_PHASE_CACHE: dict = {}


def _conjugation_phases(channel: AngularChannel) -> tuple[complex, complex]:
    """Phases with C(i Psi_up,0) = ph_up (0,Psi'_dn), C(0,Psi_dn) = ph_dn (i Psi'_up,0)."""
    key = (channel.two_j, channel.two_m, channel.eps)
    if key not in _PHASE_CACHE:
        target = channel.conjugate()
        pts, wts = sphere_rule(channel.two_j + 4)
        cu = charge_conjugate(channel_spinor(channel, 0, pts))
        cd = charge_conjugate(channel_spinor(channel, 1, pts))
        tu = channel_spinor(target, 0, pts)
        td = channel_spinor(target, 1, pts)
        ph_up = np.sum(wts[:, None] * np.conj(td) * cu)
        ph_dn = np.sum(wts[:, None] * np.conj(tu) * cd)
        _PHASE_CACHE[key] = (complex(ph_up), complex(ph_dn))
    return _PHASE_CACHE[key]


def radial_kinetic_coupling(orb: ChannelOrbital) -> np.ndarray:
    """a' + eps (j + 1/2) a / r for the upper profile a, by the mesh stencil.

    This is the free lower-slot map for reduced profiles u = r f: a full profile
    f in (i f Psi_up, 0) couples to the lower slot through coupling(r f) / r.
    """
    if len(orb.mesh.r) < 5:
        raise ValueError("mesh too coarse for the derivative stencil")
    if np.any(orb.lower != 0):
        raise ValueError("coupling is defined for pure-upper orbitals")
    a = orb.upper
    ch = orb.channel
    return orb.mesh.derivative(a) + ch.eps * (ch.two_j + 1) / 2 * a / orb.mesh.r
