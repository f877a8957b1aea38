"""Free-energy estimation and phase-regime diagnostics.

Monte Carlo statistics follow fixed conventions: 3 standard-error bands
for two-sided agreement checks and one-sided 99% z-tests for strict
negativity claims.  When a criterion's margin falls inside its
estimation band the verdict is "undecided" rather than a forced label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import environment as env_mod
from . import polymer
from . import walk as walk_mod
from .environment import EnvModel
from .walk import WalkModel

Z99 = 2.3263478740408408  # one-sided 99% normal quantile


class CriteriaConflictError(RuntimeError):
    """Both sufficient conditions held at one point; the scan must abort."""


class FreeEnergy(NamedTuple):
    p_hat: float
    se: float
    replicas: int


def free_energy(env: EnvModel, walk: WalkModel, beta: float, N: int,
                replicas: int, master_seed: int, *, threads: int = 1,
                replica_offset: int = 0) -> FreeEnergy:
    """Mean over replicas of (1/N) log Zhat_N with its standard error.

    beta = 0 short-circuits to exactly zero: Zhat_N is identically 1.
    """
    if replicas < 2:
        raise ValueError("free_energy needs replicas >= 2")
    if beta == 0.0:
        return FreeEnergy(0.0, 0.0, replicas)
    ids = range(replica_offset, replica_offset + replicas)
    res = polymer.run_replicas(walk, env, beta, N, master_seed, ids, threads=threads)
    vals = res.log_zhat / N
    return FreeEnergy(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replicas)), replicas)


def negative_at_99(p_hat: float, se: float) -> bool:
    return p_hat + Z99 * se < 0.0


@dataclass
class FractionalMomentTable:
    theta: float
    Ns: np.ndarray
    means: np.ndarray
    ses: np.ndarray
    rate: float
    rate_se: float


def fractional_moment(env: EnvModel, walk: WalkModel, beta: float, theta: float,
                      N_grid, replicas: int, master_seed: int, *,
                      threads: int = 1) -> FractionalMomentTable:
    """MC estimates of E[(Zhat_N)^theta] on an N grid with a WLS decay rate.

    Replica blocks are independent across grid points so the rate fit's
    error bars are valid.  N = 0 entries are exact: Zhat_0 = 1.
    """
    if not (0.0 < theta < 1.0):
        raise ValueError("theta must lie in (0, 1)")
    Ns = sorted(int(n) for n in N_grid)
    means, ses = [], []
    for j, N in enumerate(Ns):
        if N == 0:
            means.append(1.0)
            ses.append(0.0)
            continue
        ids = range(j * replicas, (j + 1) * replicas)
        res = polymer.run_replicas(walk, env, beta, N, master_seed, ids, threads=threads)
        vals = np.exp(theta * res.log_zhat)
        means.append(float(vals.mean()))
        ses.append(float(vals.std(ddof=1) / math.sqrt(replicas)))
    means_a, ses_a = np.array(means), np.array(ses)
    pos = [i for i, n in enumerate(Ns) if n > 0]
    x = np.array([Ns[i] for i in pos], dtype=float)
    y = np.log(means_a[pos])
    sig = ses_a[pos] / means_a[pos]
    wgt = 1.0 / np.maximum(sig, 1e-12) ** 2
    # weighted least squares slope of log E[(Zhat)^theta] against N
    xm = np.average(x, weights=wgt)
    ym = np.average(y, weights=wgt)
    sxx = float(np.sum(wgt * (x - xm) ** 2))
    rate = float(np.sum(wgt * (x - xm) * (y - ym)) / sxx)
    rate_se = math.sqrt(1.0 / sxx)
    return FractionalMomentTable(theta, np.array(Ns), means_a, ses_a, rate, rate_se)


def fractional_moment_recursion_trace(theta: float, c3: float, b_sequence,
                                      tail_probs) -> np.ndarray:
    """Iterated fractional-moment upper bound sequence.

    Starting from u_0 = 1, applies
        u_N = eps + exp(-c3 / (2 b_N)) (u_{N-1} - eps)
    with eps = sup_N 2 P(S_N not in Lambda_N)^theta, the envelope form of
    the one-step recursion between consecutive fractional moments.
    """
    if not (0.0 < theta < 1.0):
        raise ValueError("theta must lie in (0, 1)")
    if c3 <= 0:
        raise ValueError("c3 must be positive")
    b = np.asarray(list(b_sequence), dtype=float)
    t = np.asarray(list(tail_probs), dtype=float)
    if len(b) != len(t):
        raise ValueError("b_sequence and tail_probs must have equal length")
    if np.any(b <= 0):
        raise ValueError("b_sequence entries must be positive")
    if np.any(t < 0):
        raise ValueError("tail probabilities must be nonnegative")
    eps = float(np.max(2.0 * t**theta)) if len(t) else 0.0
    u = np.empty(len(b) + 1)
    u[0] = 1.0
    for i in range(len(b)):
        u[i + 1] = eps + math.exp(-c3 / (2.0 * b[i])) * (u[i] - eps)
    return u


@dataclass
class RatioStats:
    Ns: np.ndarray
    ratios: dict[int, np.ndarray]      # per N: valid per-replica ratios
    excluded: dict[int, int]           # per N: replicas with -log Zhat <= 0
    bracket: tuple[float, float]
    fraction_in_bracket: float


def overlap_log_ratio(env: EnvModel, walk: WalkModel, beta: float, N_grid,
                      replicas: int, master_seed: int, *,
                      bracket: tuple[float, float] = (0.05, 20.0),
                      threads: int = 1) -> RatioStats:
    """Per-replica (sum_{n<=N} I_n) / (-log Zhat_N) over an N grid.

    Replicas with -log Zhat_N <= 0 are excluded and counted; the
    returned fraction is taken over all valid (N, replica) pairs.
    """
    Ns = sorted(int(n) for n in N_grid)
    ratios: dict[int, np.ndarray] = {}
    excluded: dict[int, int] = {}
    n_in, n_tot = 0, 0
    for j, N in enumerate(Ns):
        ids = range(j * replicas, (j + 1) * replicas)
        res = polymer.run_replicas(walk, env, beta, N, master_seed, ids,
                                   record_traces=True, threads=threads)
        olap_sum = res.overlap_trace.sum(axis=1)
        neg_log = -res.log_zhat
        # the ratio is undefined at -log Zhat <= 0; the floor keeps values
        # made of pure window-trim residue out as well
        ok = neg_log > np.maximum(4.0 * res.leaked, 1e-12)
        vals = olap_sum[ok] / neg_log[ok]
        ratios[N] = vals
        excluded[N] = int((~ok).sum())
        n_in += int(((vals >= bracket[0]) & (vals <= bracket[1])).sum())
        n_tot += len(vals)
    frac = n_in / n_tot if n_tot else math.nan
    return RatioStats(np.array(Ns), ratios, excluded, bracket, frac)


class CriterionResult(NamedTuple):
    verdict: str          # holds | fails | undecided | inapplicable
    margin: float
    band: float


def weak_disorder_criterion(env: EnvModel, walk: WalkModel, beta: float, *,
                            horizon: int = 1 << 12,
                            pi_estimate: walk_mod.PiEstimate | None = None) -> CriterionResult:
    """Sufficient condition lambda(2 beta) - 2 lambda(beta) < -log pi_p.

    Inapplicable for recurrent walks (pi_p = 1).  The pi_p estimation
    error widens into an undecided band around the threshold.
    """
    if walk_mod.classify_recurrence(walk) == "recurrent":
        return CriterionResult("inapplicable", math.nan, 0.0)
    pi = pi_estimate or walk_mod.intersection_probability(walk, horizon)
    lhs = env_mod.lambda_(env, 2.0 * beta) - 2.0 * env_mod.lambda_(env, beta)
    target = -math.log(pi.value)
    band = pi.error_bound / pi.value
    margin = target - lhs
    if margin > band:
        return CriterionResult("holds", margin, band)
    if margin < -band:
        return CriterionResult("fails", margin, band)
    return CriterionResult("undecided", margin, band)


def strong_disorder_criterion(env: EnvModel, walk: WalkModel, beta: float) -> CriterionResult:
    """Sufficient condition beta lambda'(beta) - lambda(beta) > entropy(q).

    The entropy of the tabulated law plus its analytic tail bound forms
    the comparison band; a margin inside the band reports "fails"
    (conservative, the condition is only sufficient).
    """
    ent = walk_mod.walk_entropy(walk)
    lhs = beta * env_mod.lambda_prime(env, beta) - env_mod.lambda_(env, beta)
    margin = lhs - ent.value
    if margin > ent.tail_bound:
        return CriterionResult("holds", margin, ent.tail_bound)
    return CriterionResult("fails", margin, ent.tail_bound)


@dataclass
class DistanceStats:
    mean: float
    quantiles: dict[str, float]
    per_replica: np.ndarray
    a_N: int


def scaled_endpoint_distance(env: EnvModel, walk: WalkModel, beta: float, N: int,
                             replicas: int, master_seed: int, *,
                             threads: int = 1) -> DistanceStats:
    """Total-variation distance between the polymer endpoint law and the
    free-walk endpoint law, both binned at resolution a_N."""
    a_N = walk_mod.scaling_sequence(walk, N)[N]
    free_lo, free_rho = polymer.free_marginal(walk, N)

    def binned(lo: int, rho: np.ndarray) -> dict[int, float]:
        # bins centered on multiples of a_N, so the symmetric bulk sits in
        # one bin instead of straddling an edge at the origin
        xs = np.arange(lo, lo + len(rho))
        bins = np.floor_divide(xs + a_N // 2, a_N)
        out: dict[int, float] = {}
        for b in np.unique(bins):
            out[int(b)] = float(rho[bins == b].sum())
        return out

    free_bins = binned(free_lo, free_rho)
    if beta == 0.0:
        return DistanceStats(0.0, {"q50": 0.0, "q90": 0.0}, np.zeros(replicas), a_N)
    res = polymer.run_replicas(walk, env, beta, N, master_seed, range(replicas),
                               capture_final=True, threads=threads)
    dists = np.zeros(replicas)
    for i, (lo, rho) in enumerate(res.final_windows):
        pb = binned(lo, rho)
        keys = set(pb) | set(free_bins)
        dists[i] = 0.5 * sum(abs(pb.get(k, 0.0) - free_bins.get(k, 0.0)) for k in keys)
    qs = {"q50": float(np.quantile(dists, 0.5)), "q90": float(np.quantile(dists, 0.9))}
    return DistanceStats(float(dists.mean()), qs, dists, a_N)


def zhat_second_moment(walk: WalkModel, env: EnvModel, beta: float, N: int) -> float:
    """Exact log E[(Zhat_N)^2] via the difference-walk recursion.

    Two replicas in a common environment couple only through same-site
    visits, each contributing the factor exp(lambda(2 beta) - 2 lambda(beta));
    conditioning on the difference walk makes this a one-line transfer
    matrix.  Used as the independent variance oracle for martingale checks.
    """
    gamma2 = env_mod.lambda_(env, 2.0 * beta) - 2.0 * env_mod.lambda_(env, beta)
    r = np.convolve(walk.kernel, walk.kernel)
    K2 = len(r) // 2
    dist = np.array([1.0])
    lo = 0
    log_e = 0.0
    w0 = math.exp(gamma2)
    for _ in range(N):
        dist = np.convolve(dist, r)
        lo -= K2
        dist[-lo] *= w0
        s = dist.sum()
        log_e += math.log(s)
        dist /= s
    return log_e


@dataclass
class PhasePoint:
    alpha: float
    beta: float
    N: int
    theta: float
    replicas: int
    p_hat: float = math.nan
    p_se: float = math.nan
    fm_rate: float = math.nan
    fm_se: float = math.nan
    overlap_sum: float = math.nan
    weak_crit: str = "undecided"
    strong_crit: str = "fails"
    verdict: str = "undecided"
    error: str = ""


@dataclass(frozen=True)
class ScanConfig:
    alphas: tuple[float, ...]
    betas: tuple[float, ...]
    N: int
    replicas: int
    theta: float = 0.5
    fm_grid: tuple[int, ...] = ()
    master_seed: int = 0
    p0: float = 0.5
    tail_tolerance: float = 1e-2
    L: walk_mod.SlowlyVaryingSpec = field(default_factory=walk_mod.constant_L)
    env: EnvModel = field(default_factory=lambda: EnvModel(env_mod.GAUSSIAN))
    pi_horizon: int = 1 << 12
    threads: int = 1
    share_env_seeds: bool = True


def phase_scan(cfg: ScanConfig) -> list[PhasePoint]:
    """Free energy, fractional moments and both criteria per (alpha, beta) cell.

    Environment seeds are shared across beta within a fixed-alpha slice
    (variance reduction for monotonicity checks); per-cell failures are
    recorded in the row and the scan continues.  Mutually exclusive
    criteria both holding is a hard error.
    """
    rows: list[PhasePoint] = []
    fm_grid = cfg.fm_grid or (cfg.N // 4, cfg.N // 2, cfg.N)
    for ai, alpha in enumerate(cfg.alphas):
        w = walk_mod.build_walk(alpha, cfg.L, cfg.p0, cfg.tail_tolerance)
        pi_est = None
        if walk_mod.classify_recurrence(w) == "transient":
            pi_est = walk_mod.intersection_probability(w, cfg.pi_horizon)
        for bi, beta in enumerate(cfg.betas):
            row = PhasePoint(alpha=alpha, beta=beta, N=cfg.N, theta=cfg.theta,
                             replicas=cfg.replicas)
            try:
                seed = cfg.master_seed + ai if cfg.share_env_seeds else cfg.master_seed + 1000 * ai + bi
                if beta == 0.0:
                    row.p_hat, row.p_se, row.overlap_sum = 0.0, 0.0, math.nan
                else:
                    res = polymer.run_replicas(w, cfg.env, beta, cfg.N, seed,
                                               range(cfg.replicas), record_traces=True,
                                               threads=cfg.threads)
                    vals = res.log_zhat / cfg.N
                    row.p_hat = float(vals.mean())
                    row.p_se = float(vals.std(ddof=1) / math.sqrt(cfg.replicas))
                    row.overlap_sum = float(res.overlap_trace.sum(axis=1).mean())
                fm = fractional_moment(cfg.env, w, beta, cfg.theta, fm_grid,
                                       max(cfg.replicas // 2, 2), cfg.master_seed + 7919 * ai + bi,
                                       threads=cfg.threads)
                row.fm_rate, row.fm_se = fm.rate, fm.rate_se
                weak = weak_disorder_criterion(cfg.env, w, beta, pi_estimate=pi_est)
                strong = strong_disorder_criterion(cfg.env, w, beta)
                row.weak_crit, row.strong_crit = weak.verdict, strong.verdict
                if weak.verdict == "holds" and strong.verdict == "holds":
                    raise CriteriaConflictError(
                        f"criteria conflict at alpha={alpha}, beta={beta}: weak and strong "
                        "disorder conditions cannot hold together")
                if weak.verdict == "holds":
                    row.verdict = "weak-consistent"
                elif strong.verdict == "holds" or (beta > 0 and negative_at_99(row.p_hat, row.p_se)):
                    row.verdict = "very-strong-consistent"
                else:
                    row.verdict = "undecided"
            except CriteriaConflictError:
                raise
            except Exception as exc:  # per-cell failure: record, continue
                row.error = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows
