"""Endpoint atoms, restricted partition ratios, block exchangeability and
the tilted-environment machinery behind the superdiffusivity bound.

Conventions: atoms use the measure at time n-1 pushed one free increment
forward, matching the overlap convention; block layouts accept an
explicit half-width because the theorem radius beta^2 N / (4 (alpha+1+eps)^2
(log N)^2) rounds to zero at desk-scale N (a layout built from the
theorem value is flagged when that happens).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import environment as env_mod
from . import polymer
from .environment import GAUSSIAN, EnvField, EnvModel
from .polymer import PathConstraint
from .walk import WalkModel


class LocalizationError(ValueError):
    pass


class TieError(RuntimeError):
    """Two exchangeable block values compared exactly equal."""


def theorem_radius(alpha: float, beta: float, N: int, eps_margin: float) -> float:
    """Corridor radius beta^2 N / (4 (alpha+1+eps)^2 (log N)^2)."""
    return beta * beta * N / (4.0 * (alpha + 1.0 + eps_margin) ** 2 * math.log(N) ** 2)


@dataclass
class AtomTrace:
    epsilon: float
    max_mass: np.ndarray      # per n: max_x P_{n-1,beta}(S_n = x)
    indicator: np.ndarray     # 1 iff an atom above epsilon exists
    fraction: np.ndarray      # running (1/n) sum of indicators

    @property
    def final_fraction(self) -> float:
        return float(self.fraction[-1])


def _trace_to_atoms(max_mass: np.ndarray, epsilon: float) -> AtomTrace:
    ind = (max_mass > epsilon).astype(np.int64)
    frac = np.cumsum(ind) / np.arange(1, len(ind) + 1)
    return AtomTrace(epsilon, max_mass, ind, frac)


def atom_trace(field, walk: WalkModel, beta: float, N: int, epsilon: float) -> AtomTrace:
    """Per-step atom indicators for one environment replica."""
    if not (0.0 < epsilon < 1.0):
        raise LocalizationError("epsilon must lie in (0, 1)")
    _, tr = polymer.run(field, walk, beta, N, record=True, leak_budget=1.0)
    return _trace_to_atoms(tr.max_mass, epsilon)


def atom_traces_replicated(env: EnvModel, walk: WalkModel, beta: float, N: int,
                           epsilon: float, replicas: int, master_seed: int, *,
                           threads: int = 1) -> list[AtomTrace]:
    if not (0.0 < epsilon < 1.0):
        raise LocalizationError("epsilon must lie in (0, 1)")
    res = polymer.run_replicas(walk, env, beta, N, master_seed, range(replicas),
                               record_traces=True, threads=threads)
    return [_trace_to_atoms(res.max_mass_trace[i], epsilon) for i in range(replicas)]


def restricted_ratio(field, walk: WalkModel, beta: float, N: int, r: float) -> float:
    """P_{N,beta}(max_n |S_n| < r): corridor-restricted over unrestricted Zhat."""
    if r < 1:
        raise LocalizationError("corridor radius must be >= 1")
    free = polymer.run(field, walk, beta, N, leak_budget=1.0)
    c = PathConstraint("global-window", r=r)
    boxed = polymer.run(field, walk, beta, N, constraint=c, leak_budget=1.0)
    if not np.isfinite(boxed.log_zhat):
        return 0.0
    return float(math.exp(boxed.log_zhat - free.log_zhat))


class FluctResult(NamedTuple):
    radius: float
    theorem_mode: bool
    radius_flagged: bool      # radius < 1: N too small for the asymptotic corridor
    exit_probs: np.ndarray
    mean: float


def fluctuation_probability(env: EnvModel, walk: WalkModel, beta: float, N: int,
                            eps_margin: float, replicas: int, master_seed: int, *,
                            radius: float | None = None,
                            threads: int = 1) -> FluctResult:
    """Replica values of P_{N,beta}(max_n |S_n| >= radius).

    The default radius is the theorem corridor; a user radius switches
    the output to exploratory mode.
    """
    if walk.alpha <= 1.0:
        raise LocalizationError("the fluctuation bound machinery assumes alpha > 1")
    if env.family != GAUSSIAN:
        raise LocalizationError("fluctuation experiments assume the Gaussian environment")
    theorem_mode = radius is None
    r = theorem_radius(walk.alpha, beta, N, eps_margin) if theorem_mode else float(radius)
    flagged = r < 1.0
    ids = range(replicas)
    free = polymer.run_replicas(walk, env, beta, N, master_seed, ids, threads=threads)
    constraint = PathConstraint("global-window", r=r)
    boxed = polymer.run_replicas(walk, env, beta, N, master_seed, ids,
                                 constraint=constraint, threads=threads)
    with np.errstate(invalid="ignore"):
        ratio = np.exp(boxed.log_zhat - free.log_zhat)
    ratio[~np.isfinite(boxed.log_zhat)] = 0.0
    probs = 1.0 - ratio
    return FluctResult(r, theorem_mode, flagged, probs, float(probs.mean()))


@dataclass(frozen=True)
class BlockLayout:
    """Disjoint second-half blocks I^k = [(2k-1)L, (2k+1)L), |k| <= M."""

    N: int
    L_half: int
    M: int
    theorem_L_flagged: bool = False

    def __post_init__(self):
        if self.N % 2 != 0:
            raise LocalizationError("block experiments need an even horizon N")
        if self.L_half < 1:
            raise LocalizationError("block half-width must be >= 1")
        if self.M < 0:
            raise LocalizationError("M must be >= 0")

    def block(self, k: int) -> tuple[int, int]:
        return (2 * k - 1) * self.L_half, (2 * k + 1) * self.L_half

    @classmethod
    def from_theorem(cls, walk_alpha: float, beta: float, N: int,
                     eps0: float) -> "BlockLayout":
        L = math.floor(theorem_radius(walk_alpha, beta, N, eps0))
        return cls(N=N, L_half=max(L, 1), M=0, theorem_L_flagged=L < 1)


def block_partition_functions(field, walk: WalkModel, beta: float,
                              layout: BlockLayout) -> np.ndarray:
    """log Zhat with the second half confined to block k, for |k| <= M.

    The unconstrained first-half state is computed once and shared.
    """
    N, M = layout.N, layout.M
    state = polymer.init_state()
    for _ in range(N // 2):
        state = polymer.step(state, field, walk, beta, leak_budget=1.0)
    out = np.empty(2 * M + 1)
    for j, k in enumerate(range(-M, M + 1)):
        lo, hi = layout.block(k)
        c = PathConstraint("half-time-block", lo=lo, hi=hi, n_from=N // 2 + 1)
        s = state.copy()
        for _ in range(N // 2):
            s = polymer.step(s, field, walk, beta, constraint=c, leak_budget=1.0)
        out[j] = s.log_zhat
    return out


class ExchangeFrequency(NamedTuple):
    frequency: float
    se: float
    expected: float
    replicas: int
    ties: int


def exchangeability_frequency(env: EnvModel, walk: WalkModel, beta: float,
                              layout: BlockLayout, replicas: int, master_seed: int, *,
                              threads: int = 1) -> ExchangeFrequency:
    """How often the unshifted block attains the max of the shifted family.

    For each k the walk is confined to the central block on the second
    half while the environment is read shifted by 2 k L; the resulting
    values are exchangeable, so block 0 wins with probability 1/(2M+1).
    Exact ties abort: with a continuous environment they have
    probability zero, so one indicates a keying bug.
    """
    if env.family != GAUSSIAN:
        raise LocalizationError("exchangeability experiment assumes the Gaussian environment")
    if beta == 0.0:
        raise LocalizationError("beta must be positive: all block values tie at beta = 0")
    N, M = layout.N, layout.M
    if M == 0:
        return ExchangeFrequency(1.0, 0.0, 1.0, replicas, 0)
    lam = env_mod.lambda_(env, beta)
    lo, hi = layout.block(0)
    c0 = PathConstraint("half-time-block", lo=lo, hi=hi, n_from=N // 2 + 1)

    ids = np.arange(replicas, dtype=np.int64)
    base = polymer.EnvAdapter(env, master_seed, ids)
    bs = polymer.batch_init(base, replicas)
    for _ in range(N // 2):
        bs, _ = polymer.batch_step(bs, walk, beta, lam)
    values = np.empty((2 * M + 1, replicas))
    for j, k in enumerate(range(-M, M + 1)):
        adapter = polymer.ShiftAdapter(base, 2 * k * layout.L_half, N // 2 + 1)
        s = bs.copy()
        s.adapter = adapter
        for _ in range(N // 2):
            s, _ = polymer.batch_step(s, walk, beta, lam, c0)
        values[j] = s.log_zhat
    order = np.sort(values, axis=0)
    tied = (order[-1] == order[-2]) & np.isfinite(order[-1])
    if np.any(tied):
        raise TieError("exact tie between exchangeable block values")
    if np.any(~np.isfinite(order[-1])):
        raise LocalizationError("all block values vanished; blocks unreachable at this N")
    wins = (np.argmax(values, axis=0) == M).astype(float)
    freq = float(wins.mean())
    se = math.sqrt(freq * (1.0 - freq) / replicas) if replicas > 1 else math.nan
    return ExchangeFrequency(freq, se, 1.0 / (2 * M + 1), replicas, 0)


class ShiftRnReport(NamedTuple):
    h: int
    exact_min: float
    potter_floor: float      # C(delta) * (|k| N)^-(alpha+1+delta)
    floor_constant: float
    excluded_mass: float     # support mass outside the scan overlap


def _ratio_min_exact(walk: WalkModel, h: int) -> tuple[float, float]:
    """Exact min over x of p_x / p_{x-h} on the truncated support overlap."""
    if h == 0:
        return 1.0, 0.0
    K = walk.K

    def p(x: np.ndarray) -> np.ndarray:
        out = np.zeros(len(x))
        nz = x != 0
        inside = nz & (np.abs(x) <= K)
        out[inside] = walk.analytic_q(x[inside])
        out[x == 0] = walk.p0
        return out

    xs = np.arange(-K, K + 1)
    valid = np.abs(xs - h) <= K
    px = p(xs)
    pxh = p(xs - h)
    ok = valid & (pxh > 0) & (px > 0)
    ratios = px[ok] / pxh[ok]
    excluded = float(px[~ok].sum())
    return float(ratios.min()), excluded


def shift_rn_bound(walk: WalkModel, k: int, N: int, delta: float, *,
                   beta: float = 1.0, eps0: float = 0.05,
                   L_half: int | None = None) -> ShiftRnReport:
    """Lower bound on the jump-law density ratio under a block shift h = 2kL.

    exact_min scans the truncated support; the Potter-style floor is the
    per-family analytic bound C (|k| N)^-(alpha+1+delta).  The worst ratio
    is attained next to the shifted origin (|x - h| = 1, |x| ~ |h|) or at
    the atom x = h, which gives the floor constant below; h <= |k| N turns
    it into the (|k| N) form.
    """
    if k == 0:
        raise LocalizationError("shift_rn_bound needs k != 0")
    if delta <= 0:
        raise LocalizationError("delta must be positive")
    L = L_half if L_half is not None else max(math.floor(theorem_radius(walk.alpha, beta, N, eps0)), 1)
    h = 2 * k * L
    if abs(h) > 2 * walk.K:
        raise LocalizationError(f"shift {h} leaves the truncated support overlap (K={walk.K})")
    exact, excluded = _ratio_min_exact(walk, h)

    alpha = walk.alpha
    ah = abs(h)
    # generic term floor: (|x-h|/|x|)^(alpha+1) >= (1.5 |h|)^-(alpha+1) for |x| <= |h|+1;
    # atom x = h contributes q(h)/p0; both are >= C |h|^-(alpha+1)
    lvals = walk.L(np.arange(1, walk.K + 1))
    lratio_min = float(np.min(lvals) / np.max(lvals))
    c_generic = lratio_min * 1.5 ** -(alpha + 1.0)
    c_atom = float(walk.L(ah)) / walk.p0 if walk.p0 > 0 else math.inf
    const = min(c_generic, c_atom, 1.0)
    if ah > abs(k) * N:
        raise LocalizationError("shift exceeds |k| N; the Potter floor form does not apply")
    floor = const * (abs(k) * N) ** -(alpha + 1.0 + delta)
    return ShiftRnReport(h=h, exact_min=exact, potter_floor=floor,
                         floor_constant=const, excluded_mass=excluded)


@dataclass(frozen=True)
class TiltedField:
    """Base field plus a constant shift on [N/2+1, N] x J_N.

    The shift (N/2 |J_N|)^(-1/2) is the hat-environment mean; |J_N| counts
    the integer sites with |x| < radius.
    """

    base: EnvField
    N: int
    radius: float

    def __post_init__(self):
        if self.base.env.family != GAUSSIAN:
            raise LocalizationError("tilting is defined for the Gaussian environment")
        if self.N % 2 != 0:
            raise LocalizationError("tilting needs an even horizon")

    @property
    def m(self) -> int:
        return math.ceil(self.radius) - 1

    @property
    def J_size(self) -> int:
        return 2 * self.m + 1

    @property
    def shift(self) -> float:
        return 1.0 / math.sqrt(0.5 * self.N * self.J_size)

    @property
    def env(self) -> EnvModel:
        return self.base.env

    def omega_row(self, n: int, xs: np.ndarray) -> np.ndarray:
        vals = self.base.omega_row(n, xs)
        if self.N // 2 + 1 <= n <= self.N:
            vals = vals + self.shift * (np.abs(xs) <= self.m)
        return vals

    def omega(self, n: int, x: int) -> float:
        return float(self.omega_row(n, np.array([x]))[0])


def tilted_environment(field: EnvField, N: int, radius: float) -> TiltedField:
    if radius < 1:
        raise LocalizationError("tilt region radius must cover at least the origin site")
    return TiltedField(field, N, radius)


class TiltIdentity(NamedTuple):
    base_mean: float
    reweighted_mean: float
    diff: float
    diff_se: float


def tilt_identity_check(env: EnvModel, walk: WalkModel, beta: float, N: int,
                        radius: float, replicas: int, master_seed: int) -> TiltIdentity:
    """Two estimators of the same mean via the tilt change of variables.

    f = Zhat with the second half confined to the tilt columns.  Since
    the tilted field under the base law has the law of the base field
    under the tilted measure, E[f(base)] equals
    E[f(tilted) exp(-W - 1/2)] with W the normalized field sum over the
    tilt region.  The paired difference should vanish within noise.
    """
    if env.family != GAUSSIAN:
        raise LocalizationError("the tilt identity assumes the Gaussian environment")
    m = math.ceil(radius) - 1
    c = PathConstraint("half-time-block", lo=-m, hi=m + 1, n_from=N // 2 + 1)
    a_vals = np.empty(replicas)
    b_vals = np.empty(replicas)
    for i in range(replicas):
        base = EnvField(env, master_seed, i)
        tilt = tilted_environment(base, N, radius)
        st_a = polymer.run(base, walk, beta, N, constraint=c, leak_budget=1.0)
        st_b = polymer.run(tilt, walk, beta, N, constraint=c, leak_budget=1.0)
        xs = np.arange(-m, m + 1)
        W = sum(float(base.omega_row(n, xs).sum()) for n in range(N // 2 + 1, N + 1))
        W /= math.sqrt(0.5 * N * (2 * m + 1))
        a_vals[i] = math.exp(st_a.log_zhat)
        b_vals[i] = math.exp(st_b.log_zhat) * math.exp(-W - 0.5)
    d = a_vals - b_vals
    return TiltIdentity(float(a_vals.mean()), float(b_vals.mean()),
                        float(d.mean()), float(d.std(ddof=1) / math.sqrt(replicas)))
