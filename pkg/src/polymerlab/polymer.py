"""Exact transfer-matrix forward recursion for the polymer measure.

The forward state carries the normalized site weights rho_n (the polymer
endpoint law at time n) on an integer window plus the accumulated log of
the normalized partition function.  Normalizing every step keeps the
recursion in a safe floating range; the window grows by the kernel cut
each step and is trimmed where rho drops below a relative floor, with
the trimmed mass audited in leaked_mass.

Two code paths exist: the single-replica ``step``/``run`` functions use
exact direct convolution and are the reference semantics (checked
against path enumeration), and ``run_replicas`` batches many replicas
through an FFT convolution for the statistical experiments.  Batches are
partitioned by replica index only, never by thread count, so outputs do
not depend on parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import fft as sfft

from . import environment as env_mod
from ._keyed import derive_rng
from .environment import EnvModel
from .walk import WalkModel

TRIM_REL = 1e-16
BATCH_SIZE = 256


class PolymerError(RuntimeError):
    pass


class LeakBudgetError(PolymerError):
    """Cumulative window-trim mass exceeded its configured cap."""


@dataclass(frozen=True)
class PathConstraint:
    """Restriction applied to every step (or to the late half) of the path.

    kind "none": unconstrained.
    kind "global-window": |S_n| < r for every n.
    kind "half-time-block": S_n in [lo, hi) for all n >= n_from.
    """

    kind: str = "none"
    r: float | None = None
    lo: int | None = None
    hi: int | None = None
    n_from: int = 1

    def __post_init__(self):
        if self.kind not in ("none", "global-window", "half-time-block"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "global-window" and not (self.r is not None and self.r > 0):
            raise ValueError("global-window needs a positive radius")
        if self.kind == "half-time-block":
            if self.lo is None or self.hi is None or not (self.lo < self.hi):
                raise ValueError("half-time-block needs a nonempty [lo, hi)")

    def bounds_at(self, n: int) -> tuple[float, float] | None:
        """Allowed closed-open real interval for S_n, or None if free."""
        if self.kind == "global-window":
            return (-self.r, self.r)  # open interval |x| < r
        if self.kind == "half-time-block" and n >= self.n_from:
            return (float(self.lo), float(self.hi))
        return None

    def mask(self, xs: np.ndarray, n: int) -> np.ndarray | None:
        b = self.bounds_at(n)
        if b is None:
            return None
        if self.kind == "global-window":
            return np.abs(xs) < self.r
        return (xs >= self.lo) & (xs < self.hi)


NO_CONSTRAINT = PathConstraint()


@dataclass
class ForwardState:
    """Normalized forward measure at time n with accumulated log Z-hat."""

    n: int
    x_lo: int
    rho: np.ndarray
    log_zhat: float = 0.0
    leaked_mass: float = 0.0

    @property
    def xs(self) -> np.ndarray:
        return np.arange(self.x_lo, self.x_lo + len(self.rho))

    @property
    def window(self) -> tuple[int, int]:
        return self.x_lo, self.x_lo + len(self.rho) - 1

    def copy(self) -> "ForwardState":
        return ForwardState(self.n, self.x_lo, self.rho.copy(), self.log_zhat, self.leaked_mass)


class StepTrace(NamedTuple):
    overlap: float          # I_n = sum_x mu_n(x)^2
    max_mass: float         # max_x mu_n(x)
    argmax_x: int           # smallest maximizing site


def init_state() -> ForwardState:
    return ForwardState(n=0, x_lo=0, rho=np.array([1.0]))


def _mu_stats(conv: np.ndarray, x_lo: int) -> StepTrace:
    total = conv.sum()
    if total <= 0.0:
        return StepTrace(0.0, 0.0, x_lo)
    mu = conv / total
    amax = int(np.argmax(mu))  # np.argmax returns the first (smallest x) maximizer
    return StepTrace(overlap=float(np.dot(mu, mu)), max_mass=float(mu[amax]), argmax_x=x_lo + amax)


def _step_full(state: ForwardState, field, walk: WalkModel, beta: float,
               constraint: PathConstraint, lam: float, leak_budget: float,
               trim_rel: float) -> tuple[ForwardState, StepTrace]:
    n_next = state.n + 1
    if not np.isfinite(state.log_zhat):
        dead = ForwardState(n_next, state.x_lo, state.rho * 0.0, -math.inf, state.leaked_mass)
        return dead, StepTrace(0.0, 0.0, state.x_lo)
    conv = np.convolve(state.rho, walk.kernel)
    x_lo = state.x_lo - walk.K
    xs = np.arange(x_lo, x_lo + len(conv))
    trace = _mu_stats(conv, x_lo)

    m = constraint.mask(xs, n_next)
    if m is not None:
        conv = np.where(m, conv, 0.0)
    shift = 0.0
    if beta != 0.0:
        # max-shifted exponent keeps the weights in range for any beta;
        # the absolute scale moves into log_zhat
        e = beta * field.omega_row(n_next, xs) - lam
        shift = float(e.max())
        raw = conv * np.exp(e - shift)
    else:
        raw = conv
    total = float(raw.sum())
    if total <= 0.0:
        return ForwardState(n_next, x_lo, raw, -math.inf, state.leaked_mass), trace

    rho = raw / total
    keep = np.nonzero(rho >= trim_rel * rho.max())[0]
    lo_i, hi_i = int(keep[0]), int(keep[-1]) + 1
    leaked_step = float(rho[:lo_i].sum() + rho[hi_i:].sum())
    rho = rho[lo_i:hi_i]
    if leaked_step > 0.0:
        rho = rho / (1.0 - leaked_step)
    leaked = state.leaked_mass + leaked_step
    # at beta = 0 with no constraint the pre-trim mass is exactly 1
    # (kernel and rho both sum to 1); drop the rounding noise of the sum
    log_add = 0.0 if (beta == 0.0 and m is None) else math.log(total) + shift
    log_zhat = state.log_zhat + log_add + math.log1p(-leaked_step)
    if leaked > leak_budget:
        raise LeakBudgetError(f"leaked_mass={leaked:g} exceeds budget {leak_budget:g}")
    return ForwardState(n_next, x_lo + lo_i, rho, log_zhat, leaked), trace


def step(state: ForwardState, field, walk: WalkModel, beta: float,
         constraint: PathConstraint = NO_CONSTRAINT, *,
         leak_budget: float = 1e-6, trim_rel: float = TRIM_REL) -> ForwardState:
    """One transfer-matrix step: convolve, constrain, reweight, renormalize."""
    lam = env_mod.lambda_(field.env, beta) if beta != 0.0 else 0.0
    new, _ = _step_full(state, field, walk, beta, constraint, lam, leak_budget, trim_rel)
    return new


@dataclass
class RunTrace:
    log_zhat: np.ndarray
    overlap: np.ndarray
    max_mass: np.ndarray
    argmax_x: np.ndarray
    leaked: np.ndarray


def run(field, walk: WalkModel, beta: float, N: int,
        constraint: PathConstraint = NO_CONSTRAINT, *,
        leak_budget: float = 1e-6, trim_rel: float = TRIM_REL,
        record: bool = False) -> ForwardState | tuple[ForwardState, RunTrace]:
    """N-fold step from the origin state."""
    if N < 1:
        raise ValueError("N must be >= 1")
    lam = env_mod.lambda_(field.env, beta) if beta != 0.0 else 0.0
    state = init_state()
    if record:
        tr = RunTrace(log_zhat=np.zeros(N), overlap=np.zeros(N), max_mass=np.zeros(N),
                      argmax_x=np.zeros(N, dtype=np.int64), leaked=np.zeros(N))
    for i in range(N):
        state, st = _step_full(state, field, walk, beta, constraint, lam, leak_budget, trim_rel)
        if record:
            tr.log_zhat[i] = state.log_zhat
            tr.overlap[i] = st.overlap
            tr.max_mass[i] = st.max_mass
            tr.argmax_x[i] = st.argmax_x
            tr.leaked[i] = state.leaked_mass
    return (state, tr) if record else state


def endpoint_law(state: ForwardState) -> tuple[np.ndarray, np.ndarray]:
    """Sites and masses of the polymer endpoint distribution at time n."""
    return state.xs, state.rho


def overlap(state: ForwardState, walk: WalkModel) -> float:
    """I_N from the state at time N-1: one extra free increment, then
    the collision probability of two independent endpoint draws."""
    conv = np.convolve(state.rho, walk.kernel)
    conv = conv / conv.sum()
    return float(np.dot(conv, conv))


class OverlapMC(NamedTuple):
    estimate: float
    se: float
    degenerate: bool


def two_replica_overlap_mc(field, walk: WalkModel, beta: float, N: int,
                           samples: int, *, seed: int = 0) -> OverlapMC:
    """Monte Carlo I_N: draw two endpoint positions at time N-1 from the
    polymer measure (its exact forward law), add one free increment to
    each, and count collisions.

    The statistic depends on the paths only through their endpoints, so
    sampling the endpoint marginal is equivalent to sampling full paths
    from the rho-conditioned transitions.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    state = run(field, walk, beta, N - 1) if N > 1 else init_state()
    cdf = np.cumsum(state.rho)
    cdf[-1] = 1.0
    rng = derive_rng(seed, 0x0E1, field.replica_id if hasattr(field, "replica_id") else 0)
    u = rng.random((samples, 2))
    pos = state.x_lo + np.searchsorted(cdf, u, side="right")
    incr = np.searchsorted(walk._cum_kernel, rng.random((samples, 2)), side="right") - walk.K
    hits = (pos[:, 0] + incr[:, 0]) == (pos[:, 1] + incr[:, 1])
    est = float(hits.mean())
    if samples == 1:
        return OverlapMC(est, math.nan, True)
    se = float(hits.std(ddof=1) / math.sqrt(samples))
    return OverlapMC(est, se, False)


# ---------------------------------------------------------------------------
# Batched engine


class EnvAdapter:
    """Environment reads for a batch of replicas; views can shift or tilt."""

    def __init__(self, env: EnvModel, master_seed: int, replica_ids: np.ndarray):
        self.env = env
        self.replica_ids = np.asarray(replica_ids, dtype=np.int64)
        self._bases = env_mod.replica_bases(env, master_seed, self.replica_ids)

    def omega(self, n: int, xs: np.ndarray) -> np.ndarray:
        return env_mod.omega_block(self.env, self._bases, n, xs)


class ShiftAdapter:
    """Reads the base environment at x + h for n >= n_from (block shifts)."""

    def __init__(self, base: EnvAdapter, h: int, n_from: int):
        self.base, self.h, self.n_from = base, h, n_from
        self.env = base.env

    def omega(self, n: int, xs: np.ndarray) -> np.ndarray:
        return self.base.omega(n, xs + self.h if n >= self.n_from else xs)


class TiltAdapter:
    """Adds a constant to the base field on [n_from, n_to] x [-m, m]."""

    def __init__(self, base: EnvAdapter, n_from: int, n_to: int, m: int, shift: float):
        self.base, self.n_from, self.n_to, self.m, self.shift = base, n_from, n_to, m, shift
        self.env = base.env

    def omega(self, n: int, xs: np.ndarray) -> np.ndarray:
        vals = self.base.omega(n, xs)
        if self.n_from <= n <= self.n_to:
            vals = vals + self.shift * (np.abs(xs) <= self.m)
        return vals


def _conv_rows(rho: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Full convolution of every row with the kernel (FFT)."""
    W = rho.shape[1] + kernel.size - 1
    nfft = sfft.next_fast_len(W, real=True)
    F = sfft.rfft(rho, nfft, axis=1)
    Fk = sfft.rfft(kernel, nfft)
    out = sfft.irfft(F * Fk[None, :], nfft, axis=1)[:, :W]
    np.clip(out, 0.0, None, out=out)
    return out


@dataclass
class BatchResult:
    replica_ids: np.ndarray
    log_zhat: np.ndarray
    leaked: np.ndarray
    checkpoints: dict[int, np.ndarray] = field(default_factory=dict)
    overlap_trace: np.ndarray | None = None
    max_mass_trace: np.ndarray | None = None
    argmax_trace: np.ndarray | None = None
    log_trace: np.ndarray | None = None
    leaked_trace: np.ndarray | None = None
    final_windows: list[tuple[int, np.ndarray]] | None = None


@dataclass
class BatchState:
    """Forward measure of one replica batch, shared window."""

    n: int
    x_lo: int
    rho: np.ndarray          # (B, W) rows normalized
    log_zhat: np.ndarray     # (B,)
    leaked: np.ndarray       # (B,)
    adapter: object

    def copy(self) -> "BatchState":
        return BatchState(self.n, self.x_lo, self.rho.copy(), self.log_zhat.copy(),
                          self.leaked.copy(), self.adapter)


def batch_init(adapter, n_rows: int) -> BatchState:
    return BatchState(0, 0, np.ones((n_rows, 1)), np.zeros(n_rows), np.zeros(n_rows), adapter)


def batch_step(bs: BatchState, walk: WalkModel, beta: float, lam: float,
               constraint: PathConstraint = NO_CONSTRAINT, *,
               trim_rel: float = TRIM_REL,
               collect: bool = False) -> tuple[BatchState, dict | None]:
    n_next = bs.n + 1
    conv = _conv_rows(bs.rho, walk.kernel)
    x_lo = bs.x_lo - walk.K
    xs = np.arange(x_lo, x_lo + conv.shape[1])

    stats = None
    if collect:
        tot = conv.sum(axis=1, keepdims=True)
        safe = np.where(tot > 0, tot, 1.0)
        mu = conv / safe
        am = np.argmax(mu, axis=1)
        stats = {
            "overlap": np.einsum("ij,ij->i", mu, mu),
            "max_mass": mu[np.arange(len(am)), am],
            "argmax_x": x_lo + am,
        }

    m = constraint.mask(xs, n_next)
    if m is not None:
        conv *= m[None, :]
    if beta != 0.0:
        e = beta * bs.adapter.omega(n_next, xs) - lam
        shift = e.max(axis=1, keepdims=True)  # per-replica max keeps exp in range
        raw = conv * np.exp(e - shift)
        shift = shift[:, 0]
    else:
        raw = conv
        shift = np.zeros(conv.shape[0])
    total = raw.sum(axis=1)
    alive = total > 0.0
    safe_total = np.where(alive, total, 1.0)
    rho = raw / safe_total[:, None]

    col_ref = rho.max(axis=0)
    keep = np.nonzero(col_ref >= trim_rel * col_ref.max())[0]
    lo_i, hi_i = int(keep[0]), int(keep[-1]) + 1
    leaked_step = rho[:, :lo_i].sum(axis=1) + rho[:, hi_i:].sum(axis=1)
    rho = rho[:, lo_i:hi_i]
    if leaked_step.any():
        rho = rho / (1.0 - leaked_step)[:, None]

    if beta == 0.0 and m is None:
        log_add = np.zeros_like(safe_total)  # pre-trim mass is exactly 1
    else:
        log_add = np.log(safe_total) + shift
    log_zhat = bs.log_zhat + np.where(alive, log_add + np.log1p(-leaked_step), -np.inf)
    new = BatchState(n_next, x_lo + lo_i, rho, log_zhat, bs.leaked + leaked_step, bs.adapter)
    return new, stats


def run_replicas(walk: WalkModel, env: EnvModel, beta: float, N: int,
                 master_seed: int, replica_ids, *,
                 constraint: PathConstraint = NO_CONSTRAINT,
                 checkpoints: tuple[int, ...] = (),
                 record_traces: bool = False,
                 capture_final: bool = False,
                 batch_size: int = BATCH_SIZE,
                 trim_rel: float = TRIM_REL,
                 threads: int = 1) -> BatchResult:
    """Independent replicas of the forward recursion, batched and vectorized.

    The batch partition depends only on the replica id order and
    batch_size, so results are byte-identical for any thread count.
    """
    replica_ids = np.asarray(list(replica_ids), dtype=np.int64)
    lam = env_mod.lambda_(env, beta) if beta != 0.0 else 0.0
    R = len(replica_ids)
    out = BatchResult(replica_ids=replica_ids, log_zhat=np.zeros(R), leaked=np.zeros(R))
    for n_ck in checkpoints:
        out.checkpoints[n_ck] = np.zeros(R)
    if record_traces:
        out.overlap_trace = np.zeros((R, N))
        out.max_mass_trace = np.zeros((R, N))
        out.argmax_trace = np.zeros((R, N), dtype=np.int64)
        out.log_trace = np.zeros((R, N))
        out.leaked_trace = np.zeros((R, N))
    if capture_final:
        out.final_windows = [None] * R

    def run_batch(sl: slice):
        ids = replica_ids[sl]
        adapter = EnvAdapter(env, master_seed, ids)
        bs = batch_init(adapter, len(ids))
        want = record_traces
        for i in range(N):
            bs, stats = batch_step(bs, walk, beta, lam, constraint,
                                   trim_rel=trim_rel, collect=want)
            if want:
                out.overlap_trace[sl, i] = stats["overlap"]
                out.max_mass_trace[sl, i] = stats["max_mass"]
                out.argmax_trace[sl, i] = stats["argmax_x"]
                out.log_trace[sl, i] = bs.log_zhat
                out.leaked_trace[sl, i] = bs.leaked
            if bs.n in out.checkpoints:
                out.checkpoints[bs.n][sl] = bs.log_zhat
        out.log_zhat[sl] = bs.log_zhat
        out.leaked[sl] = bs.leaked
        if capture_final:
            for j in range(len(ids)):
                out.final_windows[sl.start + j] = (bs.x_lo, bs.rho[j].copy())

    slices = [slice(i, min(i + batch_size, R)) for i in range(0, R, batch_size)]
    if threads > 1 and len(slices) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(run_batch, slices))
    else:
        for sl in slices:
            run_batch(sl)
    return out


def free_marginal(walk: WalkModel, N: int,
                  constraint: PathConstraint = NO_CONSTRAINT,
                  trim_rel: float = TRIM_REL) -> tuple[int, np.ndarray]:
    """Endpoint law of the free (beta = 0) walk, by exact convolution."""
    rho = np.array([1.0])
    x_lo = 0
    for n in range(1, N + 1):
        rho = np.convolve(rho, walk.kernel)
        x_lo -= walk.K
        m = constraint.mask(np.arange(x_lo, x_lo + len(rho)), n)
        if m is not None:
            rho = np.where(m, rho, 0.0)
        if rho.max() <= 0.0:
            raise PolymerError("free marginal has no mass left under the constraint")
        keep = np.nonzero(rho >= trim_rel * rho.max())[0]
        x_lo += int(keep[0])
        rho = rho[int(keep[0]):int(keep[-1]) + 1]
    return x_lo, rho / rho.sum()
