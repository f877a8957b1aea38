"""Batch experiment harness: config parsing, orchestration, artifacts.

Configs are JSON with one section per concern; unknown keys are
rejected.  Every output is a pure function of (config, master_seed):
replica work is partitioned by fixed-size batches and gathered in
replica order, so the thread count never changes a byte.  Floats are
printed with 17 significant digits for round-trip fidelity.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import bounds as bounds_mod
from . import diagnostics as diag
from . import environment as env_mod
from . import localization as loc
from . import polymer
from . import walk as walk_mod
from .environment import EnvModel
from .walk import SlowlyVaryingSpec, WalkModel

KINDS = ("free-energy", "phase-scan", "overlap", "atoms", "fluct", "blocks",
         "bound", "walk-check")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join(f"  - {e}" for e in self.errors))


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _check_keys(section: dict, allowed: set[str], where: str, errors: list[str]):
    for k in section:
        if k not in allowed:
            errors.append(f"{where}: unknown key {k!r}")


@dataclass
class ExperimentConfig:
    kind: str
    walk: dict
    env: dict
    grid: dict
    replicas: int
    master_seed: int
    threads: int
    out_dir: str
    budgets: dict
    params: dict = field(default_factory=dict)

    def build_walk(self, alpha: float | None = None) -> WalkModel:
        w = self.walk
        L = SlowlyVaryingSpec(w["L"]["family"], w["L"].get("c", 1.0), w["L"].get("gamma", 0.0))
        return walk_mod.build_walk(alpha if alpha is not None else w["alpha"],
                                   L, w["p0"], w["tail_tolerance"])

    def build_env(self) -> EnvModel:
        e = self.env
        if e["family"] == env_mod.TABULATED:
            return env_mod.tabulated(e["values"], e["probs"], e.get("beta_max", math.inf))
        return EnvModel(e["family"], beta_max=e.get("beta_max", math.inf))

    def echo(self) -> dict:
        return {
            "kind": self.kind, "walk": self.walk, "env": self.env, "grid": self.grid,
            "replicas": self.replicas, "master_seed": self.master_seed,
            "threads": self.threads, "out_dir": self.out_dir, "budgets": self.budgets,
            "params": self.params,
        }


_TOP_KEYS = {"kind", "walk", "env", "grid", "replicas", "master_seed", "threads",
             "out_dir", "budgets", "params"}
_WALK_KEYS = {"alpha", "p0", "tail_tolerance", "L"}
_L_KEYS = {"family", "c", "gamma", "params"}
_ENV_KEYS = {"family", "beta_max", "values", "probs"}
_GRID_KEYS = {"betas", "Ns", "alphas"}
_BUDGET_KEYS = {"leak"}
_PARAM_KEYS = {
    "free-energy": set(),
    "phase-scan": {"theta", "fm_grid", "pi_horizon"},
    "overlap": {"mc_samples"},
    "atoms": {"epsilon"},
    "fluct": {"eps_margin", "radius"},
    "blocks": {"M", "L_half", "eps0"},
    "bound": {"C1", "C2", "theta", "gamma", "K_cut", "mc_samples", "l_mode",
              "retries", "horizon"},
    "walk-check": {"scaling_n_max", "pi_horizon"},
}


def validate(raw: dict) -> ExperimentConfig:
    """Normalize and validate a parsed config tree; aggregate every error."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a JSON object"])
    _check_keys(raw, _TOP_KEYS, "top level", errors)

    kind = raw.get("kind")
    if kind not in KINDS:
        errors.append(f"kind: must be one of {KINDS}, got {kind!r}")

    walk = dict(raw.get("walk") or {})
    _check_keys(walk, _WALK_KEYS, "walk", errors)
    walk.setdefault("p0", 0.5)
    walk.setdefault("tail_tolerance", 1e-2)
    walk.setdefault("L", {"family": "constant", "c": 1.0})
    walk["L"] = dict(walk["L"])
    _check_keys(walk["L"], _L_KEYS, "walk.L", errors)
    if "params" in walk["L"]:  # positional [c] or [c, gamma] form
        ps = list(walk["L"].pop("params"))
        if not 1 <= len(ps) <= 2:
            errors.append("walk.L.params: expected [c] or [c, gamma]")
        else:
            walk["L"]["c"] = float(ps[0])
            if len(ps) == 2:
                walk["L"]["gamma"] = float(ps[1])
    if "alpha" not in walk and not (raw.get("grid") or {}).get("alphas"):
        errors.append("walk.alpha: required (or provide grid.alphas)")
    if not (0.0 <= walk["p0"] < 1.0):
        errors.append(f"walk.p0: must lie in [0, 1), got {walk['p0']}")
    if walk["tail_tolerance"] <= 0:
        errors.append("walk.tail_tolerance: must be positive")
    if walk["L"].get("family") not in ("constant", "log-power"):
        errors.append(f"walk.L.family: unsupported {walk['L'].get('family')!r}")

    env = dict(raw.get("env") or {"family": env_mod.GAUSSIAN})
    _check_keys(env, _ENV_KEYS, "env", errors)
    if env.get("family") not in (env_mod.GAUSSIAN, env_mod.RADEMACHER, env_mod.TABULATED):
        errors.append(f"env.family: unsupported {env.get('family')!r}")
    if env.get("family") == env_mod.TABULATED and ("values" not in env or "probs" not in env):
        errors.append("env: tabulated family needs values and probs")

    grid = dict(raw.get("grid") or {})
    _check_keys(grid, _GRID_KEYS, "grid", errors)
    grid.setdefault("betas", [])
    grid.setdefault("Ns", [])
    grid.setdefault("alphas", [])
    if kind in ("free-energy", "phase-scan", "overlap", "atoms", "fluct", "blocks", "bound"):
        if not grid["betas"]:
            errors.append("grid.betas: at least one beta required")
        if kind not in ("bound", "phase-scan") and not grid["Ns"]:
            errors.append("grid.Ns: at least one N required")
    if any(b < 0 for b in grid["betas"]):
        errors.append("grid.betas: must be nonnegative")
    if any(int(n) < 1 for n in grid["Ns"]):
        errors.append("grid.Ns: must be >= 1")

    replicas = int(raw.get("replicas", 2))
    if replicas < 1:
        errors.append("replicas: must be >= 1")
    master_seed = int(raw.get("master_seed", 0))
    threads = int(raw.get("threads", 1))
    if threads < 1:
        errors.append("threads: must be >= 1")
    out_dir = str(raw.get("out_dir", "out"))

    budgets = dict(raw.get("budgets") or {})
    _check_keys(budgets, _BUDGET_KEYS, "budgets", errors)
    budgets.setdefault("leak", 1e-8)

    params = dict(raw.get("params") or {})
    if kind in _PARAM_KEYS:
        _check_keys(params, _PARAM_KEYS[kind], "params", errors)
    if kind == "atoms":
        eps = params.setdefault("epsilon", 0.05)
        if not (0.0 < eps < 1.0):
            errors.append(f"params.epsilon: must lie in (0, 1), got {eps}")
    if kind == "fluct":
        params.setdefault("eps_margin", 0.1)
        params.setdefault("radius", None)
    if kind == "blocks":
        params.setdefault("M", 1)
        params.setdefault("L_half", None)
        params.setdefault("eps0", 0.05)
        for n in grid["Ns"]:
            if int(n) % 2 != 0:
                errors.append(f"grid.Ns: block experiments need even N, got {n}")
    if kind == "bound":
        params.setdefault("C1", 16)
        params.setdefault("C2", 1.0)
        params.setdefault("theta", None)
        params.setdefault("gamma", None)
        params.setdefault("K_cut", 10)
        params.setdefault("mc_samples", 2000)
        params.setdefault("l_mode", "unit")
        params.setdefault("retries", 2)
        params.setdefault("horizon", 4096)
        if params["l_mode"] not in ("unit", "walk"):
            errors.append(f"params.l_mode: must be 'unit' or 'walk', got {params['l_mode']!r}")
        alphas = grid["alphas"] or [walk.get("alpha")]
        for a in alphas:
            if a is None:
                continue
            g = params["gamma"] if params["gamma"] else (1.0 + a) / 2.0
            t = params["theta"] if params["theta"] else (1.0 + 1.0 / g) / 2.0
            if g * t <= 1.0:
                errors.append(f"params: gamma*theta = {g * t:g} <= 1 violates the "
                              f"tail-series constraint at alpha={a}")
    if kind == "overlap":
        params.setdefault("mc_samples", 100000)
    if kind == "phase-scan":
        params.setdefault("theta", 0.5)
        params.setdefault("fm_grid", [])
        params.setdefault("pi_horizon", 1 << 12)
        if not grid["alphas"]:
            errors.append("grid.alphas: phase-scan needs an alpha list")
    if kind == "walk-check":
        params.setdefault("scaling_n_max", 1000)
        params.setdefault("pi_horizon", 1 << 12)

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(kind=kind, walk=walk, env=env, grid=grid, replicas=replicas,
                            master_seed=master_seed, threads=threads, out_dir=out_dir,
                            budgets=budgets, params=params)


def load_config(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


@dataclass
class RunManifest:
    config: dict
    version: str
    files: dict[str, str]
    wall_clock_s: float
    seed_ledger: dict
    truncation: dict = field(default_factory=dict)
    cell_failures: list = field(default_factory=list)
    partial: bool = False

    def to_json(self) -> str:
        return json.dumps({
            "config": self.config, "version": self.version, "files": self.files,
            "wall_clock_s": self.wall_clock_s, "seed_ledger": self.seed_ledger,
            "truncation": self.truncation,
            "cell_failures": self.cell_failures, "partial": self.partial,
        }, indent=2, sort_keys=True)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _alphas(cfg: ExperimentConfig) -> list[float]:
    return list(cfg.grid["alphas"]) or [cfg.walk["alpha"]]


def _run_free_energy(cfg: ExperimentConfig, out: Path, files: list[Path],
                     failures: list):
    env = cfg.build_env()
    rows = []
    cell = 0
    for alpha in _alphas(cfg):
        w = cfg.build_walk(alpha)
        for beta in cfg.grid["betas"]:
            for N in cfg.grid["Ns"]:
                try:
                    # replica ids offset per cell: no (seed, replica) pair reuse
                    fe = diag.free_energy(env, w, beta, int(N), cfg.replicas,
                                          cfg.master_seed, threads=cfg.threads,
                                          replica_offset=cell * cfg.replicas)
                    rows.append([alpha, beta, int(N), cfg.replicas, fe.p_hat, fe.se])
                except Exception as exc:
                    failures.append({"cell": [alpha, beta, int(N)],
                                     "error": f"{type(exc).__name__}: {exc}"})
                cell += 1
    p = out / "fe.csv"
    _write_csv(p, ["alpha", "beta", "N", "replicas", "p_hat", "p_se"], rows)
    files.append(p)


def _run_phase_scan(cfg: ExperimentConfig, out: Path, files: list[Path],
                   failures: list):
    sc = diag.ScanConfig(
        alphas=tuple(cfg.grid["alphas"]), betas=tuple(cfg.grid["betas"]),
        N=int(cfg.grid["Ns"][0]) if cfg.grid["Ns"] else 128,
        replicas=cfg.replicas, theta=cfg.params["theta"],
        fm_grid=tuple(int(n) for n in cfg.params["fm_grid"]),
        master_seed=cfg.master_seed, p0=cfg.walk["p0"],
        tail_tolerance=cfg.walk["tail_tolerance"],
        L=SlowlyVaryingSpec(cfg.walk["L"]["family"], cfg.walk["L"].get("c", 1.0),
                            cfg.walk["L"].get("gamma", 0.0)),
        env=cfg.build_env(), pi_horizon=int(cfg.params["pi_horizon"]),
        threads=cfg.threads)
    rows = diag.phase_scan(sc)
    p = out / "scan.csv"
    _write_csv(p, ["alpha", "beta", "N", "theta", "replicas", "p_hat", "p_se",
                   "fm_rate", "fm_se", "overlap_sum", "weak_crit", "strong_crit",
                   "verdict", "error"],
               [[r.alpha, r.beta, r.N, r.theta, r.replicas, r.p_hat, r.p_se,
                 r.fm_rate, r.fm_se, r.overlap_sum, r.weak_crit, r.strong_crit,
                 r.verdict, r.error] for r in rows])
    files.append(p)
    q = out / "scan_summary.json"
    q.write_text(json.dumps({
        "config": cfg.echo(),
        "cells": [r.__dict__ for r in rows],
    }, indent=2, sort_keys=True, default=str))
    files.append(q)


def _run_overlap(cfg: ExperimentConfig, out: Path, files: list[Path],
                failures: list):
    env = cfg.build_env()
    w = cfg.build_walk()
    beta = cfg.grid["betas"][0]
    N = int(cfg.grid["Ns"][0])
    res = polymer.run_replicas(w, env, beta, N, cfg.master_seed, range(cfg.replicas),
                               record_traces=True, capture_final=True, threads=cfg.threads)
    rows = []
    for i in range(cfg.replicas):
        for n in range(N):
            rows.append([i, n + 1, res.log_trace[i, n], res.overlap_trace[i, n],
                         res.max_mass_trace[i, n], res.argmax_trace[i, n],
                         res.leaked_trace[i, n]])
    p = out / "traces.csv"
    _write_csv(p, ["replica_id", "n", "log_zhat", "overlap", "max_endpoint_mass",
                   "argmax_x", "leaked_mass"], rows)
    files.append(p)

    # endpoint histogram: mean polymer endpoint mass vs the free law
    free_lo, free_rho = polymer.free_marginal(w, N)
    masses: dict[int, float] = {}
    for lo, rho in res.final_windows:
        for j, m in enumerate(rho):
            masses[lo + j] = masses.get(lo + j, 0.0) + float(m) / cfg.replicas
    xs = sorted(set(masses) | set(range(free_lo, free_lo + len(free_rho))))
    ep_rows = []
    for x in xs:
        fidx = x - free_lo
        fmass = float(free_rho[fidx]) if 0 <= fidx < len(free_rho) else 0.0
        ep_rows.append([x, masses.get(x, 0.0), fmass])
    p2 = out / "endpoint.csv"
    _write_csv(p2, ["x", "polymer_mass", "free_mass"], ep_rows)
    files.append(p2)

    # exact overlap vs the two-replica Monte Carlo estimator on replica 0
    f0 = env_mod.EnvField(env, cfg.master_seed, 0)
    state = polymer.run(f0, w, beta, N - 1) if N > 1 else polymer.init_state()
    exact = polymer.overlap(state, w)
    mc = polymer.two_replica_overlap_mc(f0, w, beta, N, int(cfg.params["mc_samples"]),
                                        seed=cfg.master_seed)
    p3 = out / "overlap_mc.csv"
    _write_csv(p3, ["beta", "N", "exact_I_N", "mc_estimate", "mc_se", "degenerate"],
               [[beta, N, exact, mc.estimate, mc.se, int(mc.degenerate)]])
    files.append(p3)


def _run_atoms(cfg: ExperimentConfig, out: Path, files: list[Path],
              failures: list):
    env = cfg.build_env()
    w = cfg.build_walk()
    eps = cfg.params["epsilon"]
    beta = cfg.grid["betas"][0]
    N = int(cfg.grid["Ns"][0])
    traces = loc.atom_traces_replicated(env, w, beta, N, eps, cfg.replicas,
                                        cfg.master_seed, threads=cfg.threads)
    rows = []
    for i, tr in enumerate(traces):
        for n in range(N):
            rows.append([i, n + 1, tr.max_mass[n], tr.indicator[n], tr.fraction[n]])
    p = out / "atoms.csv"
    _write_csv(p, ["replica_id", "n", "max_mass", "indicator", "running_fraction"], rows)
    files.append(p)
    mm = np.stack([tr.max_mass for tr in traces])
    ind = np.stack([tr.indicator for tr in traces])
    frac = np.stack([tr.fraction for tr in traces])
    srows = [[n + 1, mm[:, n].mean(), ind[:, n].mean(), frac[:, n].mean()] for n in range(N)]
    p2 = out / "atoms_summary.csv"
    _write_csv(p2, ["n", "mean_max_mass", "mean_indicator", "mean_running_fraction"], srows)
    files.append(p2)


def _run_fluct(cfg: ExperimentConfig, out: Path, files: list[Path],
               failures: list):
    env = cfg.build_env()
    w = cfg.build_walk()
    rows, srows = [], []
    for beta in cfg.grid["betas"]:
        for N in cfg.grid["Ns"]:
            try:
                res = loc.fluctuation_probability(env, w, beta, int(N), cfg.params["eps_margin"],
                                                  cfg.replicas, cfg.master_seed,
                                                  radius=cfg.params["radius"], threads=cfg.threads)
            except Exception as exc:
                failures.append({"cell": [beta, int(N)],
                                 "error": f"{type(exc).__name__}: {exc}"})
                continue
            for i, pr in enumerate(res.exit_probs):
                rows.append([beta, int(N), i, res.radius, int(res.theorem_mode),
                             int(res.radius_flagged), pr])
            se = float(res.exit_probs.std(ddof=1) / math.sqrt(len(res.exit_probs))) \
                if len(res.exit_probs) > 1 else math.nan
            srows.append([beta, int(N), res.radius, int(res.theorem_mode),
                          int(res.radius_flagged), res.mean, se])
    p = out / "fluct.csv"
    _write_csv(p, ["beta", "N", "replica_id", "radius", "theorem_mode", "radius_flagged",
                   "exit_prob"], rows)
    files.append(p)
    p2 = out / "fluct_summary.csv"
    _write_csv(p2, ["beta", "N", "radius", "theorem_mode", "radius_flagged",
                    "mean_exit_prob", "se"], srows)
    files.append(p2)


def _run_blocks(cfg: ExperimentConfig, out: Path, files: list[Path],
               failures: list):
    env = cfg.build_env()
    w = cfg.build_walk()
    beta = cfg.grid["betas"][0]
    N = int(cfg.grid["Ns"][0])
    M = int(cfg.params["M"])
    if cfg.params["L_half"] is not None:
        layout = loc.BlockLayout(N=N, L_half=int(cfg.params["L_half"]), M=M)
    else:
        base = loc.BlockLayout.from_theorem(w.alpha, beta, N, cfg.params["eps0"])
        layout = loc.BlockLayout(N=N, L_half=base.L_half, M=M,
                                 theorem_L_flagged=base.theorem_L_flagged)
    ex = loc.exchangeability_frequency(env, w, beta, layout, cfg.replicas,
                                       cfg.master_seed, threads=cfg.threads)
    rows = []
    for i in range(min(cfg.replicas, 64)):  # per-replica block values for a sample
        f = env_mod.EnvField(env, cfg.master_seed, i)
        vals = loc.block_partition_functions(f, w, beta, layout)
        kmax = int(np.argmax(vals)) - M
        for j, k in enumerate(range(-M, M + 1)):
            rows.append([i, k, vals[j], int(k == kmax)])
    p = out / "blocks.csv"
    _write_csv(p, ["replica_id", "k", "log_zhat_k", "is_max"], rows)
    files.append(p)
    p2 = out / "blocks_summary.csv"
    _write_csv(p2, ["beta", "N", "M", "L_half", "theorem_L_flagged", "replicas",
                    "block0_max_frequency", "se", "expected"],
               [[beta, N, M, layout.L_half, int(layout.theorem_L_flagged),
                 cfg.replicas, ex.frequency, ex.se, ex.expected]])
    files.append(p2)


def _run_bound(cfg: ExperimentConfig, out: Path, files: list[Path],
               failures: list):
    env = cfg.build_env()
    bc = bounds_mod.BoundConfig(
        C1=int(cfg.params["C1"]), C2=float(cfg.params["C2"]),
        theta=float(cfg.params["theta"] or 0.0), gamma=float(cfg.params["gamma"] or 0.0),
        K_cut=int(cfg.params["K_cut"]), mc_samples=int(cfg.params["mc_samples"]),
        horizon=int(cfg.params["horizon"]), retries=int(cfg.params["retries"]))
    rows = []
    for alpha in _alphas(cfg):
        if cfg.params["l_mode"] == "unit":
            reports = bounds_mod.slope_dataset(alpha, cfg.grid["betas"], bc)
        else:
            w = cfg.build_walk(alpha)
            reports = []
            for beta in cfg.grid["betas"]:
                try:
                    reports.append(bounds_mod.bracket_and_bound(w, env, beta, bc,
                                                                seed=cfg.master_seed))
                except Exception as exc:
                    failures.append({"cell": [alpha, beta],
                                     "error": f"{type(exc).__name__}: {exc}"})
        rows += [[r.alpha, r.beta, r.n_of_beta, r.delta_n, r.cost_factor, r.tail_sum,
                  r.block_term, r.bracket, "" if r.p_upper is None else r.p_upper,
                  r.certified_by, r.l_mode] for r in reports]
    p = out / "bound.csv"
    _write_csv(p, ["alpha", "beta", "n_of_beta", "delta_n", "cost_factor", "tail_sum",
                   "block_term", "bracket", "p_upper", "certified_by", "l_mode"], rows)
    files.append(p)
    q = out / "bound_constants.json"
    q.write_text(json.dumps({
        "C1": bc.C1, "C2": bc.C2, "theta": cfg.params["theta"], "gamma": cfg.params["gamma"],
        "K_cut": bc.K_cut, "mc_samples": bc.mc_samples, "l_mode": cfg.params["l_mode"],
        "retries": bc.retries, "horizon": bc.horizon,
    }, indent=2, sort_keys=True))
    files.append(q)


def _run_walk_check(cfg: ExperimentConfig, out: Path, files: list[Path],
                    failures: list):
    rows = []
    an_rows = []
    for alpha in _alphas(cfg):
        try:
            w = cfg.build_walk(alpha)
        except Exception as exc:
            failures.append({"cell": [alpha], "error": f"{type(exc).__name__}: {exc}"})
            continue
        ent = walk_mod.walk_entropy(w)
        rec = walk_mod.classify_recurrence(w)
        pi_val, pi_err = math.nan, math.nan
        if rec == "transient":
            pi = walk_mod.intersection_probability(w, int(cfg.params["pi_horizon"]))
            pi_val, pi_err = pi.value, pi.error_bound
        rows.append([alpha, w.p0, w.L.c, w.K, w.eps_tail, ent.value, ent.tail_bound,
                     rec, pi_val, pi_err])
        seq = walk_mod.scaling_sequence(w, int(cfg.params["scaling_n_max"]))
        for n in (1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1000):
            if n <= seq.n_max:
                an_rows.append([alpha, n, seq[n]])
    p = out / "walk.csv"
    _write_csv(p, ["alpha", "p0", "c_rescaled", "K", "eps_tail", "entropy",
                   "entropy_tail_bound", "recurrence", "pi_p", "pi_p_error"], rows)
    files.append(p)
    p2 = out / "scaling.csv"
    _write_csv(p2, ["alpha", "n", "a_n"], an_rows)
    files.append(p2)


_RUNNERS = {
    "free-energy": _run_free_energy,
    "phase-scan": _run_phase_scan,
    "overlap": _run_overlap,
    "atoms": _run_atoms,
    "fluct": _run_fluct,
    "blocks": _run_blocks,
    "bound": _run_bound,
    "walk-check": _run_walk_check,
}


def run(cfg: ExperimentConfig) -> RunManifest:
    """Execute one experiment; write its CSV artifacts and manifest."""
    t0 = time.perf_counter()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []
    failures: list = []
    _RUNNERS[cfg.kind](cfg, out, files, failures)
    sharing = {
        "free-energy": "none: replica ids offset per cell",
        "phase-scan": "betas within an alpha slice share environment seeds "
                      "(variance reduction for monotonicity)",
        "fluct": "N values share (seed, replica) pairs (couples the exit "
                 "probabilities across horizons)",
    }.get(cfg.kind, "single cell")
    truncation = {}
    for alpha in _alphas(cfg):
        try:
            w = cfg.build_walk(alpha)
            truncation[str(alpha)] = {"K": w.K, "eps_tail": w.eps_tail,
                                      "c_rescaled": w.L.c}
        except Exception:
            pass  # infeasible alphas already surface as cell failures
    manifest = RunManifest(
        config=cfg.echo(), version=__version__,
        files={p.name: _sha256(p) for p in files},
        wall_clock_s=time.perf_counter() - t0,
        seed_ledger={"master_seed": cfg.master_seed,
                     "replica_keying": "omega(seed, replica, n, x) via splitmix64",
                     "replicas": cfg.replicas,
                     "seed_sharing": sharing},
        truncation=truncation,
        cell_failures=failures, partial=bool(failures))
    (out / "manifest.json").write_text(manifest.to_json())
    return manifest
