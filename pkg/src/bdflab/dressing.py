"""Self-consistent dressing of the free Dirac vacuum and momentum-space channel tools.

The dressed operator acts on a channel as the 2x2 multiplier
[[g0, g1], [g1, -g0]] on (upper, lower) momentum profiles, where the lower
profile is stored with the factor eps so that both channel signs share one
matrix.  The dispersion solves

    g0(p) = 1 + alpha * int_0^Lambda k0(p, q) g0(q) / e(q) dq
    g1(p) = p + alpha * int_0^Lambda k1(p, q) g1(q) / e(q) dq

with k0, k1 the angular averages of the Coulomb kernel in momentum space.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .radial import RadialMesh, hankel_matrix
from .spinors import AngularChannel, ChannelOrbital, sphere_rule

__all__ = [
    "NonConvergence",
    "RegimeViolation",
    "AliasingWarning",
    "DressedDispersion",
    "MomentumOrbital",
    "reduced_kernels",
    "kernel_oracle",
    "panel_mesh",
    "dress",
    "dispersion_diagnostics",
    "export_dispersion",
    "import_dispersion",
    "paired_meshes",
    "momentum_mesh_of",
    "to_momentum",
    "from_momentum",
    "apply_d0",
    "project_positive",
    "project_negative",
    "d0_expectation",
    "abs_d0_expectation",
]

log = logging.getLogger(__name__)


class NonConvergence(RuntimeError):
    """Fixed-point or descent iteration stopped without meeting its tolerance."""


class RegimeViolation(RuntimeError):
    """The sandwich bounds 1 <= g0, p <= g1 <= p g0 failed during iteration."""


class AliasingWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# kernels


_SERIES = np.array([4 * k / (4 * k * k - 1) for k in range(1, 8)])


def reduced_kernels(p, q) -> tuple[np.ndarray, np.ndarray]:
    """Angular-averaged Coulomb kernels (k0, k1) for radial momenta p, q > 0.

    k0 = q^2/(4 pi^2) int dOmega 1/|p-q|^2 and k1 is the same with the extra
    factor cos(p, q).  Both diverge logarithmically at p = q (returned as inf).
    """
    p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
    below = p < q
    x = np.where(below, p / np.where(q > 0, q, 1.0), q / np.where(p > 0, p, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        at = np.arctanh(np.minimum(x, 1.0))
        k0 = np.where(below, np.where(x > 0, at / np.where(x > 0, x, 1.0), 1.0), x * at)
        # p < q: (1 + x^2) atanh(x)/x^2 - 1/x, switched to its series for small x
        xs = np.where(x > 0, x, 1.0)
        direct = (1 + xs**2) * at / xs**2 - 1 / xs
        series = sum(c * x ** (2 * k + 1) for k, c in enumerate(_SERIES))
        k1_below = np.where(x < 2e-2, series, direct)
        k1 = np.where(below, k1_below, (1 + x**2) * at - x)
    k0 = np.where(x >= 1.0, np.inf, k0) / np.pi
    k1 = np.where(x >= 1.0, np.inf, k1) / (2 * np.pi)
    return k0, k1


def kernel_oracle(p: float, q: float, n: int = 400) -> tuple[float, float]:
    """Brute-force sphere quadrature of the same kernels (p along z)."""
    x, w = np.polynomial.legendre.leggauss(n)
    # the integrand depends on the polar angle only
    denom = p * p + q * q - 2 * p * q * x
    base = 2 * np.pi * np.sum(w / denom)
    cosw = 2 * np.pi * np.sum(w * x / denom)
    scale = q * q / (4 * np.pi**2)
    return scale * base, scale * cosw


def _kernel_oracle_3d(p: float, q: float, n: int = 200) -> tuple[float, float]:
    """Full 3-D sphere rule version, used by the tests as an independent route."""
    pts, wts = sphere_rule(n)
    pv = np.array([0.3, -0.5, np.sqrt(1 - 0.34)]) * p
    qv = pts * q
    d2 = np.sum((pv - qv) ** 2, axis=1)
    cos = pts @ (pv / p)
    scale = q * q / (4 * np.pi**2)
    return scale * np.sum(wts / d2), scale * np.sum(wts * cos / d2)


# ---------------------------------------------------------------------------
# mesh


@dataclass(frozen=True, eq=False)
class PanelMesh:
    nodes: np.ndarray
    weights: np.ndarray
    breaks: np.ndarray
    order: int

    def panel_of(self, p: float) -> int:
        k = int(np.searchsorted(self.breaks, p, side="right")) - 1
        return min(max(k, 0), len(self.breaks) - 2)

    def panel_slice(self, k: int) -> slice:
        return slice(k * self.order, (k + 1) * self.order)


def panel_mesh(cutoff: float, n_nodes: int = 200, order: int = 10, first: float = 1e-3) -> PanelMesh:
    """Gauss-Legendre panels on [0, cutoff], geometrically graded toward p = 0."""
    if n_nodes % order:
        raise ValueError("n_nodes must be a multiple of the panel order")
    n_pan = n_nodes // order
    first = min(first, cutoff / 10)
    breaks = np.concatenate([[0.0], np.geomspace(first, cutoff, n_pan)])
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = breaks[:-1, None], breaks[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return PanelMesh(nodes, weights, breaks, order)


def _lagrange_row(xs: np.ndarray, p: float) -> np.ndarray:
    hit = np.isclose(xs, p, rtol=0, atol=1e-15 * max(1.0, abs(p)))
    if np.any(hit):
        return hit.astype(float)
    diff = p - xs
    bary = np.array([1.0 / np.prod(xs[i] - np.delete(xs, i)) for i in range(len(xs))])
    terms = bary / diff
    return terms / np.sum(terms)


def _graded_template(levels: int = 22, ratio: float = 0.18, order: int = 10):
    """Nodes/weights on (0, 1] graded geometrically toward 0 (for log singularities)."""
    x, w = np.polynomial.legendre.leggauss(order)
    hi = ratio ** np.arange(levels)
    lo = hi * ratio
    nodes = (0.5 * (hi - lo)[:, None] * x + 0.5 * (hi + lo)[:, None]).ravel()
    weights = (0.5 * (hi - lo)[:, None] * w).ravel()
    return nodes, weights


_TEMPLATE = _graded_template()


def _graded_integrals(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """int_a^b k_i(p, q) dq for batches, splitting at p and grading toward it."""
    tn, tw = _TEMPLATE
    out0 = np.zeros(len(p))
    out1 = np.zeros(len(p))
    pieces = []
    inside = (a < p) & (p < b)
    # (anchor, length, direction, mask): q = anchor + direction * length * t
    pieces.append((p, p - a, -1.0, inside))
    pieces.append((p, b - p, 1.0, inside))
    left = (p <= a) & ~inside
    pieces.append((a, b - a, 1.0, left))
    right = (p >= b) & ~inside
    pieces.append((b, b - a, -1.0, right))
    for anchor, length, direction, mask in pieces:
        if not np.any(mask):
            continue
        q = anchor[mask, None] + direction * length[mask, None] * tn
        k0, k1 = reduced_kernels(p[mask, None], q)
        k0 = np.where(np.isfinite(k0), k0, 0.0)
        k1 = np.where(np.isfinite(k1), k1, 0.0)
        out0[mask] += length[mask] * (k0 @ tw)
        out1[mask] += length[mask] * (k1 @ tw)
    return out0, out1


def _nystrom_rows(mesh: PanelMesh, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rows R0, R1 with int k_i(p, q) h(q) dq ~ R_i @ h(nodes), singularity subtracted."""
    q, w = mesh.nodes, mesh.weights
    pts = np.atleast_1d(np.asarray(pts, dtype=float))
    k0, k1 = reduced_kernels(pts[:, None], q[None, :])
    k0 = np.where(np.isfinite(k0), k0, 0.0)
    k1 = np.where(np.isfinite(k1), k1, 0.0)
    r0 = w * k0
    r1 = w * k1
    zero = pts <= 0.0
    r0[zero] = w / np.pi
    r1[zero] = 0.0
    n_pan = len(mesh.breaks) - 1
    idx = np.flatnonzero(~zero)
    homes = np.array([mesh.panel_of(p) for p in pts[idx]], dtype=int)
    jobs = []  # (row index, home panel, neighbour panel)
    for i, home in zip(idx, homes):
        for k in range(max(home - 1, 0), min(home + 2, n_pan)):
            jobs.append((i, home, k))
    if not jobs:
        return r0, r1
    rows, _, pan = (np.array(c) for c in zip(*jobs))
    i0, i1 = _graded_integrals(pts[rows], mesh.breaks[pan], mesh.breaks[pan + 1])
    for (i, home, k), e0, e1 in zip(jobs, i0, i1):
        sl = mesh.panel_slice(k)
        hs = mesh.panel_slice(home)
        interp = _lagrange_row(q[hs], pts[i])
        # swap the rule's estimate of int k(p, q) dq on this panel for the graded one
        r0[i, hs] += (e0 - np.sum(w[sl] * k0[i, sl])) * interp
        r1[i, hs] += (e1 - np.sum(w[sl] * k1[i, sl])) * interp
    return r0, r1


# ---------------------------------------------------------------------------
# dispersion


@dataclass(frozen=True, eq=False)
class DressedDispersion:
    """Converged (g0, g1) on a panel mesh; immutable and safe to share."""

    alpha: float
    cutoff: float
    mesh: PanelMesh
    g0: np.ndarray
    g1: np.ndarray
    residuals: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def p(self) -> np.ndarray:
        return self.mesh.nodes

    @property
    def e(self) -> np.ndarray:
        return np.hypot(self.g0, self.g1)

    @property
    def log_parameter(self) -> float:
        """alpha * ln(Lambda)."""
        return self.alpha * np.log(self.cutoff)

    def evaluate(self, pts) -> tuple[np.ndarray, np.ndarray]:
        """(g0, g1) at arbitrary momenta in [0, Lambda] via the Nystrom formula."""
        pts = np.atleast_1d(np.asarray(pts, dtype=float))
        if np.any(pts < 0) or np.any(pts > self.cutoff * (1 + 1e-12)):
            raise ValueError("momenta must lie in [0, Lambda]")
        if self.alpha == 0.0:
            return np.ones_like(pts), pts.copy()
        key = pts.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            r0, r1 = _nystrom_rows(self.mesh, pts)
            e = self.e
            hit = (1.0 + self.alpha * r0 @ (self.g0 / e), pts + self.alpha * r1 @ (self.g1 / e))
            if len(self._cache) < 64:
                self._cache[key] = hit
        return hit

    @property
    def mass(self) -> float:
        """m = g0(0)."""
        return float(self.evaluate([0.0])[0][0])

    def _fd_step(self) -> float:
        return min(1e-3, self.cutoff * 1e-4)

    def derivatives_at_zero(self) -> tuple[float, float]:
        """One-sided three-point differences of (g0, g1) at p = 0."""
        h = self._fd_step()
        g0, g1 = self.evaluate([0.0, h, 2 * h])
        d = lambda g: (-3 * g[0] + 4 * g[1] - g[2]) / (2 * h)  # noqa: E731
        return float(d(g0)), float(d(g1))

    @property
    def g1_prime_0(self) -> float:
        return self.derivatives_at_zero()[1]

    def nonrel_scale(self) -> float:
        """lambda = g1'(0)^2 / (alpha m), the length scale of the bound states."""
        return self.g1_prime_0**2 / (self.alpha * self.mass)

    def multipliers(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(g0, g1, inside) at p; entries beyond the cutoff are zeroed by ``inside``."""
        p = np.asarray(p, dtype=float)
        inside = p <= self.cutoff
        g0 = np.zeros_like(p)
        g1 = np.zeros_like(p)
        if np.any(inside):
            a, b = self.evaluate(p[inside])
            g0[inside], g1[inside] = a, b
        return g0, g1, inside


def dress(
    alpha: float,
    cutoff: float,
    mesh: PanelMesh | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    damping: float = 0.5,
    regime_threshold: float = 0.1,
) -> DressedDispersion:
    """Solve the dressing equations by damped fixed-point iteration."""
    if alpha < 0 or cutoff <= 0:
        raise ValueError("need alpha >= 0 and Lambda > 0")
    if alpha * np.log(max(cutoff, 1.0)) > regime_threshold:
        raise RegimeViolation(
            f"alpha ln Lambda = {alpha * np.log(cutoff):.3g} exceeds threshold {regime_threshold}"
        )
    mesh = mesh or panel_mesh(cutoff)
    p = mesh.nodes
    g0 = np.ones_like(p)
    g1 = p.copy()
    if alpha == 0.0:
        return DressedDispersion(0.0, cutoff, mesh, g0, g1, (0.0,))
    a0, a1 = _nystrom_rows(mesh, p)
    history: list[float] = []
    for it in range(max_iter):
        e = np.hypot(g0, g1)
        n0 = 1.0 + alpha * a0 @ (g0 / e)
        n1 = p + alpha * a1 @ (g1 / e)
        slack = 1e-12 * np.maximum(1.0, p)
        if np.any(n0 < 1 - 1e-12) or np.any(n1 < p - slack) or np.any(n1 > p * n0 + slack):
            raise RegimeViolation(f"sandwich bounds broken at iteration {it}")
        res = max(np.max(np.abs(n0 - g0)), np.max(np.abs(n1 - g1) / np.maximum(1.0, p)))
        history.append(float(res))
        log.debug("dress iteration %d residual %.3e", it, res)
        if res < tol:
            g0, g1 = n0, n1
            break
        if it >= 8 and res > 0.9 * history[-6]:
            raise NonConvergence(f"residual plateau at {res:.3e} after {it + 1} iterations")
        g0 = (1 - damping) * g0 + damping * n0
        g1 = (1 - damping) * g1 + damping * n1
    else:
        raise NonConvergence(f"residual {history[-1]:.3e} after {max_iter} iterations")
    return DressedDispersion(float(alpha), float(cutoff), mesh, g0, g1, tuple(history))


def dispersion_diagnostics(d: DressedDispersion) -> dict:
    """Derivative checks at the origin and over the mesh."""
    dg0, dg1 = d.derivatives_at_zero()
    p = d.p
    slope = np.gradient(d.g1, p)
    return {
        "g0_prime_0": dg0,
        "g1_prime_0": dg1,
        "sup_g1_prime_minus_1": float(np.max(np.abs(slope - 1.0))),
        "mass": d.mass,
        "log_parameter": d.log_parameter,
        "residuals": list(d.residuals),
    }


def export_dispersion(d: DressedDispersion, path) -> None:
    """Write (p, g0, g1) at 17 significant digits with a header line."""
    with open(path, "w") as fh:
        fh.write(f"# alpha={d.alpha!r} Lambda={d.cutoff!r} N={len(d.p)} order={d.mesh.order}\n")
        fh.write("# p[m_e c] g0[1] g1[m_e c]\n")
        for row in zip(d.p, d.g0, d.g1):
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def import_dispersion(path) -> DressedDispersion:
    with open(path) as fh:
        head = fh.readline()
    fields = dict(tok.split("=") for tok in head.lstrip("#").split())
    alpha, cutoff = float(fields["alpha"]), float(fields["Lambda"])
    n, order = int(fields["N"]), int(fields["order"])
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape != (n, 3):
        raise ValueError("table shape does not match its header")
    mesh = panel_mesh(cutoff, n, order)
    if not np.array_equal(mesh.nodes, data[:, 0]):
        raise ValueError("momentum nodes do not match the panel mesh")
    return DressedDispersion(alpha, cutoff, mesh, data[:, 1].copy(), data[:, 2].copy())


# ---------------------------------------------------------------------------
# momentum-space orbitals


def paired_meshes(
    scale: float = 1.0,
    n: int = 1400,
    lo: float = 1e-4,
    hi: float = 40.0,
    p_lo: float | None = None,
    p_hi: float | None = None,
):
    """Position mesh [lo, hi]*scale and momentum mesh [p_lo, p_hi]/scale, linked.

    The momentum range defaults to the position range.  Products p*r far above
    a few hundred alias on the log grid, so profiles with slow tails want a
    shorter momentum range than their position range.
    """
    p_lo = lo if p_lo is None else p_lo
    p_hi = hi if p_hi is None else p_hi
    rmesh = RadialMesh.log(lo * scale, hi * scale, n)
    pmesh = RadialMesh.log(p_lo / scale, p_hi / scale, n)
    rmesh._cache["momentum_mesh"] = pmesh
    pmesh._cache["position_mesh"] = rmesh
    return rmesh, pmesh


def momentum_mesh_of(mesh: RadialMesh) -> RadialMesh:
    pm = mesh._cache.get("momentum_mesh")
    if pm is None:
        raise ValueError("mesh has no linked momentum mesh; build it with paired_meshes")
    return pm


@dataclass(frozen=True, eq=False)
class MomentumOrbital:
    """Momentum profiles (F, L) of a channel orbital; L carries the channel sign."""

    channel: AngularChannel
    upper: np.ndarray
    lower: np.ndarray
    mesh: RadialMesh

    def norm(self) -> float:
        return float(np.sqrt(self.mesh.integrate(np.abs(self.upper) ** 2 + np.abs(self.lower) ** 2)))

    def inner(self, other: "MomentumOrbital") -> complex:
        if other.channel != self.channel:
            return 0.0j
        return self.mesh.inner(self.upper, other.upper) + self.mesh.inner(self.lower, other.lower)

    def scaled(self, c: complex) -> "MomentumOrbital":
        return MomentumOrbital(self.channel, c * self.upper, c * self.lower, self.mesh)


def to_momentum(orb: ChannelOrbital, pmesh: RadialMesh | None = None, cutoff: float | None = None) -> MomentumOrbital:
    pmesh = pmesh or momentum_mesh_of(orb.mesh)
    ch = orb.channel
    f = hankel_matrix(ch.ell_upper, pmesh.r, orb.mesh) @ orb.upper
    g = hankel_matrix(ch.ell_lower, pmesh.r, orb.mesh) @ orb.lower
    mo = MomentumOrbital(ch, f, ch.eps * g, pmesh)
    if cutoff is not None:
        out = pmesh.r > cutoff
        tail = pmesh.integrate(np.where(out, np.abs(f) ** 2 + np.abs(g) ** 2, 0.0))
        if tail > 1e-10 * max(mo.norm() ** 2, 1e-300):
            warnings.warn(f"orbital weight {tail:.2e} above the cutoff", AliasingWarning, stacklevel=2)
    return mo


def from_momentum(mo: MomentumOrbital, rmesh: RadialMesh | None = None) -> ChannelOrbital:
    rmesh = rmesh or mo.mesh._cache.get("position_mesh")
    if rmesh is None:
        raise ValueError("no position mesh linked to this momentum mesh")
    ch = mo.channel
    up = hankel_matrix(ch.ell_upper, rmesh.r, mo.mesh) @ mo.upper
    lo = hankel_matrix(ch.ell_lower, rmesh.r, mo.mesh) @ (ch.eps * mo.lower)
    return ChannelOrbital(ch, up, lo, rmesh)


def _as_momentum(orb, d: DressedDispersion) -> tuple[MomentumOrbital, bool]:
    if isinstance(orb, MomentumOrbital):
        return orb, False
    return to_momentum(orb, cutoff=d.cutoff), True


def _multipliers(d: DressedDispersion, pmesh: RadialMesh):
    return d.multipliers(pmesh.r)


def apply_d0(orb, d: DressedDispersion):
    """Dressed operator on one channel; returns the same representation it was given."""
    mo, back = _as_momentum(orb, d)
    g0, g1, inside = _multipliers(d, mo.mesh)
    f = g0 * mo.upper + g1 * mo.lower
    lo = g1 * mo.upper - g0 * mo.lower
    out = MomentumOrbital(mo.channel, f * inside, lo * inside, mo.mesh)
    return from_momentum(out, orb.mesh) if back else out


def _project(orb, d: DressedDispersion, sign: int):
    mo, back = _as_momentum(orb, d)
    g0, g1, inside = _multipliers(d, mo.mesh)
    e = np.where(inside, np.hypot(g0, g1), 1.0)
    c0, c1 = sign * g0 / e, sign * g1 / e
    f = 0.5 * (mo.upper + c0 * mo.upper + c1 * mo.lower)
    lo = 0.5 * (mo.lower + c1 * mo.upper - c0 * mo.lower)
    out = MomentumOrbital(mo.channel, f * inside, lo * inside, mo.mesh)
    return from_momentum(out, orb.mesh) if back else out


def project_positive(orb, d: DressedDispersion):
    """Positive spectral projector of the dressed operator (includes the cutoff)."""
    return _project(orb, d, +1)


def project_negative(orb, d: DressedDispersion):
    return _project(orb, d, -1)


def d0_expectation(orb, d: DressedDispersion) -> float:
    """<D psi, psi> computed in momentum space."""
    mo, _ = _as_momentum(orb, d)
    g0, g1, inside = _multipliers(d, mo.mesh)
    f, lo = mo.upper * inside, mo.lower * inside
    dens = g0 * (np.abs(f) ** 2 - np.abs(lo) ** 2) + 2 * g1 * np.real(np.conj(f) * lo)
    return float(mo.mesh.integrate(dens))


def abs_d0_expectation(orb, d: DressedDispersion) -> float:
    """<|D| psi, psi> = int e(p) (|F|^2 + |L|^2) p^2 dp."""
    mo, _ = _as_momentum(orb, d)
    g0, g1, inside = _multipliers(d, mo.mesh)
    dens = np.hypot(g0, g1) * (np.abs(mo.upper) ** 2 + np.abs(mo.lower) ** 2) * inside
    return float(mo.mesh.integrate(dens))
