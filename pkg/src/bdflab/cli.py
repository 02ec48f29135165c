"""bdflab command line.

Settings are resolved in the order defaults < config file < BDFLAB_* environment
< flags.  The config file is INI-style key = value; keys in [bdflab] apply to
every command, keys in a section named after the command only to that one.

Every run writes <command>.json (summary) and, where there is a table,
<command>.csv into --out.  Exit codes: 0 ok, 2 bad configuration, 3 regime
violation, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .dressing import NonConvergence, RegimeViolation, dispersion_diagnostics, dress
from .energy import bdf_energy, build_multiplet_trial, build_pekar_trial
from .flows import (
    ComponentEscape,
    CrossingLost,
    DimensionMismatch,
    FlowConfig,
    minimize_component,
    mountain_pass,
)
from .galerkin import multiplet_basis, para_basis
from .geometry import classify, decompose, insert_multiplet, symmetry_pairing_check
from .nonrel import FlowConfig as NRFlowConfig
from .nonrel import NRChannelProblem, channel_minimize, pekar_minimize
from .radial import RadialMesh

__all__ = ["RunConfig", "main", "run", "trial_sweep", "fit_slope", "ENV_PREFIX"]

log = logging.getLogger("bdflab")

ENV_PREFIX = "BDFLAB_"
COMMANDS = ("dress", "pekar", "nonrel", "trial-energy", "sweep-alpha", "mountain-pass",
            "minimize-w", "classify", "decompose")

EXIT_OK, EXIT_CONFIG, EXIT_REGIME, EXIT_NONCONV = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "pekar"
    alpha: float = 0.02
    cutoff: float = 100.0
    ell0: int = 0
    eps: int = 1
    mesh_n: int = 1400
    rmax: float | None = None
    tol: float = 1e-6
    seed: int = 0
    out: str = "."
    values: str = "0.04,0.02,0.01"
    mode: str = "para"
    interaction: str = "exchange-multipole"
    regime_threshold: float = 0.1
    loop_nodes: int = 64
    sweeps: int = 4
    eta: float = 1e-4
    occupy: str = "+"
    n_rad: int = 18
    workers: int = 1

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not 0 <= self.alpha < 4 / math.pi:
            raise ConfigError("alpha must lie in [0, 4/pi)")
        if self.cutoff <= 1:
            raise ConfigError("Lambda must exceed 1")
        if self.eps not in (1, -1):
            raise ConfigError("eps must be +1 or -1")
        if self.ell0 < 0:
            raise ConfigError("ell0 must be non-negative")
        if self.mesh_n < 64:
            raise ConfigError("mesh-n must be at least 64")
        if self.rmax is not None and self.rmax <= 1:
            raise ConfigError("rmax must exceed 1")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.mode not in ("para", "multiplet"):
            raise ConfigError("mode must be para or multiplet")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.loop_nodes < 4 or self.sweeps < 0 or self.eta < 0 or self.n_rad < 4:
            raise ConfigError("loop-nodes >= 4, sweeps >= 0, eta >= 0, n-rad >= 4 required")
        if any(c not in "+-," for c in self.occupy.replace(" ", "")):
            raise ConfigError("occupy is a comma list of + and -")
        self.alpha_values()
        return self

    def alpha_values(self) -> list[float]:
        try:
            vals = [float(v) for v in self.values.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad alpha list {self.values!r}") from exc
        if len(vals) < 2 or any(v <= 0 for v in vals):
            raise ConfigError("sweep needs at least two positive alpha values")
        return vals


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw):
    if raw is None:
        return None
    kind = _FIELD_TYPES[name]
    try:
        if "float" in kind:
            return float(raw)
        if "int" in kind:
            return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from exc
    return str(raw)


_ALIASES = {"lambda": "cutoff"}


def _key(name: str) -> str:
    key = name.replace("-", "_").lower()
    return _ALIASES.get(key, key)


def _from_file(path: str | None, command: str) -> dict:
    if not path:
        return {}
    parser = configparser.ConfigParser()
    try:
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    out = {}
    for section in ("bdflab", command):
        if parser.has_section(section):
            for k, v in parser.items(section):
                out[_key(k)] = v
    return out


def _from_env(env) -> dict:
    return {_key(k[len(ENV_PREFIX):]): v for k, v in env.items() if k.startswith(ENV_PREFIX) and k != ENV_PREFIX + "CONFIG"}


def resolve(args: argparse.Namespace, env=None) -> RunConfig:
    env = os.environ if env is None else env
    merged: dict = {}
    merged.update(_from_file(args.config or env.get(ENV_PREFIX + "CONFIG"), args.command))
    merged.update(_from_env(env))
    merged.update({k: v for k, v in vars(args).items() if v is not None and k in _FIELD_TYPES})
    merged["command"] = args.command
    unknown = set(merged) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown settings: {', '.join(sorted(unknown))}")
    return RunConfig(**{k: _coerce(k, v) for k, v in merged.items()}).validate()


# ---------------------------------------------------------------------------
# output


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in row])


def fit_slope(xs, ys) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.abs(np.asarray(ys, float))), 1)[0])


# ---------------------------------------------------------------------------
# shared building blocks


def _mesh(cfg: RunConfig, default_rmax: float = 60.0) -> RadialMesh:
    return RadialMesh.log(1e-4, cfg.rmax or default_rmax, cfg.mesh_n)


def _dress(cfg: RunConfig, alpha: float | None = None):
    return dress(cfg.alpha if alpha is None else alpha, cfg.cutoff, regime_threshold=cfg.regime_threshold)


def _channel_problem(cfg: RunConfig) -> NRChannelProblem:
    # the (+) channel puts the upper orbital one unit higher, so it needs a wider box
    default = 100.0 if cfg.eps > 0 else 60.0
    return NRChannelProblem(cfg.ell0, cfg.eps, _mesh(cfg, default), cfg.interaction)


def _trial_row(mode: str, a: float, cutoff: float, reference, problem, regime_threshold: float) -> dict:
    d = dress(a, cutoff, regime_threshold=regime_threshold)
    if mode == "para":
        q = build_pekar_trial(d, reference)
        count = 2
    else:
        q = build_multiplet_trial(d, reference, problem)
        count = 2 * problem.multiplicity
    e = bdf_energy(q)
    m, g1 = d.mass, d.g1_prime_0
    asym = count * m + a * a * m / g1**2 * reference.energy
    return {"alpha": a, "energy": e.total, "asymptotic": asym, "residual": abs(e.total - asym),
            "mass": m, "g1_prime_0": g1, "projection_loss": q.info["projection_loss"],
            "kinetic": e.kinetic, "exchange": e.exchange, "direct": e.direct}


def trial_sweep(mode: str, alphas, cutoff: float, reference, problem: NRChannelProblem | None = None,
                regime_threshold: float = 0.3, workers: int = 1, parts: Path | None = None) -> list[dict]:
    """Trial energies and their distance to n m + alpha^2 m / g1'(0)^2 * E_nr, one row per alpha.

    ``reference`` is the NR result (Pekar minimizer for para, channel minimizer
    for multiplet) and n = 2 or 2(2j0+1) is the number of particles.  With
    ``workers > 1`` each alpha runs in its own process; when ``parts`` is given
    every row is also written to its own JSON file there.  Rows come back in
    the order of ``alphas`` either way.
    """
    alphas = list(alphas)
    args = [(mode, a, cutoff, reference, problem, regime_threshold) for a in alphas]
    if workers > 1 and len(alphas) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(alphas))) as pool:
            rows = list(pool.map(_trial_row, *zip(*args)))
    else:
        rows = [_trial_row(*a) for a in args]
    if parts is not None:
        parts.mkdir(parents=True, exist_ok=True)
        for i, row in enumerate(rows):
            write_json(parts / f"{i:03d}-alpha-{row['alpha']:g}.json", row)
    return rows


# ---------------------------------------------------------------------------
# commands


def cmd_dress(cfg: RunConfig, out: Path) -> dict:
    d = _dress(cfg)
    write_csv(out / "dress.csv", ["p[m_e c]", "g0[1]", "g1[m_e c]", "e[m_e c^2]"],
              zip(d.p, d.g0, d.g1, d.e))
    diag = dispersion_diagnostics(d)
    diag.update({"alpha": d.alpha, "Lambda": d.cutoff, "iterations": len(d.residuals),
                 "final_residual": d.residuals[-1] if d.residuals else 0.0})
    return diag


def cmd_pekar(cfg: RunConfig, out: Path) -> dict:
    res = pekar_minimize(_mesh(cfg), _nr_flow(cfg))
    write_csv(out / "pekar.csv", ["r[1/m_e c]", "profile[(m_e c)^(3/2)]"], zip(res.mesh.r, res.profile))
    bound = -1 / (3 * math.pi)
    return {"energy": res.energy, "gaussian_bound": bound, "below_bound": res.energy <= bound + 1e-4,
            "eigenvalue": res.eigenvalue, "residual": res.residual, "iterations": res.iterations,
            "virial": res.virial}


def _nr_flow(cfg: RunConfig) -> NRFlowConfig:
    return NRFlowConfig(tol=min(cfg.tol, 1e-7))


def cmd_nonrel(cfg: RunConfig, out: Path) -> dict:
    prob = _channel_problem(cfg)
    res = channel_minimize(prob, _nr_flow(cfg))
    write_csv(out / "nonrel.csv", ["r[1/m_e c]", "profile[(m_e c)^(3/2)]"], zip(res.mesh.r, res.profile))
    return {"ell0": cfg.ell0, "eps": cfg.eps, "interaction": cfg.interaction, "energy": res.energy,
            "eigenvalue": res.eigenvalue, "residual": res.residual, "iterations": res.iterations,
            "virial": res.virial}


def _reference(cfg: RunConfig):
    if cfg.mode == "para":
        return pekar_minimize(_mesh(cfg), _nr_flow(cfg)), None
    prob = _channel_problem(cfg)
    return channel_minimize(prob, _nr_flow(cfg)), prob


def cmd_trial_energy(cfg: RunConfig, out: Path) -> dict:
    ref, prob = _reference(cfg)
    row = trial_sweep(cfg.mode, [cfg.alpha], cfg.cutoff, ref, prob, cfg.regime_threshold)[0]
    return {"mode": cfg.mode, "nr_energy": ref.energy, **row}


def cmd_sweep_alpha(cfg: RunConfig, out: Path) -> dict:
    ref, prob = _reference(cfg)
    alphas = cfg.alpha_values()
    # the sweep reaches alpha log Lambda ~ 0.3 by design
    rows = trial_sweep(cfg.mode, alphas, cfg.cutoff, ref, prob, max(cfg.regime_threshold, 0.3),
                       workers=cfg.workers, parts=out / "sweep-alpha.parts")
    write_csv(out / "sweep-alpha.csv",
              ["alpha[1]", "Lambda[m_e c]", "total[m_e c^2]", "kinetic[m_e c^2]", "exchange[m_e c^2]",
               "reference_expansion[m_e c^2]", "residual[m_e c^2]", "mass[m_e c^2]", "g1_prime_0[1]",
               "projection_loss[1]"],
              [(r["alpha"], cfg.cutoff, r["energy"], r["kinetic"], r["exchange"], r["asymptotic"], r["residual"],
                r["mass"], r["g1_prime_0"], r["projection_loss"]) for r in rows])
    slope = fit_slope(alphas, [r["residual"] for r in rows])
    return {"mode": cfg.mode, "Lambda": cfg.cutoff, "nr_energy": ref.energy, "slope": slope,
            "slope_ok": slope >= 2.5, "rows": rows}


def cmd_mountain_pass(cfg: RunConfig, out: Path) -> dict:
    d = _dress(cfg)
    pk = pekar_minimize(_mesh(cfg), _nr_flow(cfg))
    psi = build_pekar_trial(d, pk).info["orbital"]
    basis = para_basis(d, n_rad=cfg.n_rad)
    progress: list = []
    rep = mountain_pass(psi, basis, m=cfg.loop_nodes, sweeps=cfg.sweeps, progress=progress)
    write_csv(out / "mountain-pass.csv",
              ["sweep[1]", "sup_energy[m_e c^2]", "argmax_s[1]", "crossing_s[1]", "gradient[m_e c^2]",
               "endpoint_energy[m_e c^2]"],
              [(r["sweep"], r["sup_energy"], r["argmax_s"], r["crossing_s"], r["gradient"], r["endpoint_energy"])
               for r in progress])
    return {"alpha": cfg.alpha, "Lambda": cfg.cutoff, "basis_dim": basis.dim, **rep.summary()}


def cmd_minimize_w(cfg: RunConfig, out: Path) -> dict:
    d = _dress(cfg)
    prob = _channel_problem(cfg)
    nr = channel_minimize(prob, _nr_flow(cfg))
    trial = build_multiplet_trial(d, nr, prob)
    basis = multiplet_basis(d, two_j=prob.two_j0, n_rad=max(cfg.n_rad - 2, 4))
    start = basis.vacuum_projector()
    vecs = [basis.positive_projector() @ basis.from_orbital(o) for o in trial.info["orbitals"]]
    q, _ = np.linalg.qr(np.array(vecs).T)
    cq = basis.c_matrix() @ np.conj(q)
    start = start + q @ q.conj().T - cq @ cq.conj().T
    rep = minimize_component(start, basis, FlowConfig(eta=cfg.eta, tol=cfg.tol), multiplicity=prob.multiplicity)
    write_csv(out / "minimize-w.csv", ["step[1]", "energy[m_e c^2]"], enumerate(rep.history))
    bound = 2 * prob.multiplicity * d.mass
    return {"alpha": cfg.alpha, "Lambda": cfg.cutoff, "ell0": cfg.ell0, "eps": cfg.eps, "basis_dim": basis.dim,
            "upper_bound": bound, "below_bound": rep.energy.total < bound, **rep.summary()}


def _w_state(cfg: RunConfig):
    d = _dress(cfg)
    two_j = 2 * cfg.ell0 + 1
    basis = multiplet_basis(d, two_j=two_j, n_rad=8, s_min=0.5, s_max=8.0)
    rng = np.random.default_rng(cfg.seed)
    p = basis.vacuum_projector()
    signs = [s for s in cfg.occupy.replace(" ", "").split(",") if s]
    for s in signs:
        p = insert_multiplet(p, basis, two_j, 1 if s == "+" else -1, rng)
    return basis, p, signs


def cmd_classify(cfg: RunConfig, out: Path) -> dict:
    basis, p, signs = _w_state(cfg)
    label = classify(p, basis)
    return {"ell0": cfg.ell0, "occupied": signs, "label": str(label), "coefficients": label.triples()}


def cmd_decompose(cfg: RunConfig, out: Path) -> dict:
    basis, p, signs = _w_state(cfg)
    p0 = basis.vacuum_projector()
    dec = decompose(p, p0)
    write_csv(out / "decompose.csv", ["plane[1]", "angle[rad]"], enumerate(dec.angles))
    pairing = symmetry_pairing_check(p, p0, "C", basis)
    return {"occupied": signs, "plus_dim": dec.plus.shape[1], "minus_dim": dec.minus.shape[1],
            "planes": len(dec.planes), "reconstruction": float(np.max(np.abs(dec.reconstruct() - (p - p0)))),
            "pairing_ok": pairing["ok"]}


HANDLERS = {
    "dress": cmd_dress, "pekar": cmd_pekar, "nonrel": cmd_nonrel, "trial-energy": cmd_trial_energy,
    "sweep-alpha": cmd_sweep_alpha, "mountain-pass": cmd_mountain_pass, "minimize-w": cmd_minimize_w,
    "classify": cmd_classify, "decompose": cmd_decompose,
}


# ---------------------------------------------------------------------------
# entry points


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bdflab", description=__doc__.splitlines()[0])
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config")
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--lambda", dest="cutoff", type=float)
        sp.add_argument("--ell0", type=int)
        sp.add_argument("--eps", type=int)
        sp.add_argument("--mesh-n", dest="mesh_n", type=int)
        sp.add_argument("--rmax", type=float)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--regime-threshold", dest="regime_threshold", type=float)
        if name in ("sweep-alpha", "trial-energy"):
            sp.add_argument("--mode", choices=("para", "multiplet"))
        if name == "sweep-alpha":
            sp.add_argument("--values")
            sp.add_argument("--workers", type=int)
        if name in ("nonrel", "trial-energy", "sweep-alpha", "minimize-w"):
            sp.add_argument("--interaction", choices=("exchange-multipole", "product-density"))
        if name == "mountain-pass":
            sp.add_argument("--loop-nodes", dest="loop_nodes", type=int)
            sp.add_argument("--sweeps", type=int)
        if name in ("mountain-pass", "minimize-w"):
            sp.add_argument("--n-rad", dest="n_rad", type=int)
        if name == "minimize-w":
            sp.add_argument("--eta", type=float)
        if name in ("classify", "decompose"):
            sp.add_argument("--occupy")
    return ap


def run(cfg: RunConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = HANDLERS[cfg.command](cfg, out)
    summary = {"command": cfg.command, "config": asdict(cfg), "result": summary}
    write_json(out / f"{cfg.command}.json", summary)
    return summary


def main(argv=None, env=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args, env)
        summary = run(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RegimeViolation as exc:
        print(f"regime violation: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except (NonConvergence, CrossingLost, ComponentEscape, DimensionMismatch) as exc:
        print(f"no convergence: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    print(json.dumps(_clean(summary["result"]), indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
