"""I.i.d. random environment on the time-space lattice.

The field value at (n, x) is generated by hashing (master_seed,
replica_id, n, x) into a uniform and pushing it through the family's
inverse CDF, so arbitrary sites can be re-read in any order without
storing the field.  Gaussian draws use scipy.special.ndtri (the Cephes
rational approximation of the inverse normal CDF; absolute error well
below 1e-9), which pins the bit pattern of every draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ._keyed import keys_to_uniform, mix64, site_keys, u64

GAUSSIAN = "standard-gaussian"
RADEMACHER = "rademacher"
TABULATED = "tabulated"
_FAMILIES = (GAUSSIAN, RADEMACHER, TABULATED)


class EnvError(ValueError):
    pass


@dataclass(frozen=True)
class EnvModel:
    """Distribution of a single site variable, standardized to mean 0, variance 1.

    ``beta_max`` declares the interval [-beta_max, beta_max] on which the
    log moment generating function is treated as finite.  All built-in
    families have an entire mgf, so the default is infinity; the field
    exists so configs can narrow it explicitly.
    """

    family: str
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    beta_max: float = math.inf

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise EnvError(f"unknown environment family: {self.family!r}")
        if self.family == TABULATED:
            v = np.asarray(self.values, dtype=float)
            p = np.asarray(self.probs, dtype=float)
            if v.size < 2 or v.size != p.size:
                raise EnvError("tabulated environment needs matching values/probs of length >= 2")
            if np.any(p < 0) or not math.isclose(p.sum(), 1.0, rel_tol=1e-12):
                raise EnvError("tabulated probabilities must be nonnegative and sum to 1")
            mu = float(np.dot(p, v))
            var = float(np.dot(p, (v - mu) ** 2))
            if var <= 0:
                raise EnvError("tabulated environment must have positive variance")
            std = (v - mu) / math.sqrt(var)
            object.__setattr__(self, "values", tuple(std))
            object.__setattr__(self, "probs", tuple(p))
        if not self.beta_max > 0:
            raise EnvError("beta_max must be positive")

    @property
    def _cum_probs(self) -> np.ndarray:
        c = np.cumsum(np.asarray(self.probs, dtype=float))
        c[-1] = 1.0
        return c


def tabulated(values, probs, beta_max: float = math.inf) -> EnvModel:
    return EnvModel(TABULATED, tuple(values), tuple(probs), beta_max)


def _transform(env: EnvModel, u: np.ndarray, keys: np.ndarray) -> np.ndarray:
    if env.family == GAUSSIAN:
        return special.ndtri(u)
    if env.family == RADEMACHER:
        return 1.0 - 2.0 * ((keys >> np.uint64(63)) & np.uint64(1)).astype(np.float64)
    idx = np.searchsorted(env._cum_probs, u, side="left")
    return np.asarray(env.values, dtype=float)[idx]


@dataclass(frozen=True)
class EnvField:
    """One replica's environment, addressed by (n, x)."""

    env: EnvModel
    master_seed: int
    replica_id: int
    _base: np.uint64 = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        base = mix64(mix64(u64(self.master_seed)) ^ u64(self.replica_id))
        object.__setattr__(self, "_base", base)

    def omega_row(self, n: int, xs: np.ndarray) -> np.ndarray:
        """Field values at time n >= 1 on a row of sites."""
        base_n = mix64(self._base ^ u64(n))
        keys = site_keys(base_n, np.asarray(xs))
        return _transform(self.env, keys_to_uniform(keys), keys)

    def omega(self, n: int, x: int) -> float:
        return float(self.omega_row(n, np.array([x]))[0])


def replica_bases(env: EnvModel, master_seed: int, replica_ids: np.ndarray) -> np.ndarray:
    """Per-replica key bases, for the batched runner."""
    seeds = np.full(len(replica_ids), mix64(u64(master_seed)), dtype=np.uint64)
    rep = np.asarray(replica_ids, dtype=np.int64).view(np.uint64)
    return mix64(seeds ^ rep)


def omega_block(env: EnvModel, bases: np.ndarray, n: int, xs: np.ndarray) -> np.ndarray:
    """Field values for many replicas at once, shape (len(bases), len(xs))."""
    base_n = mix64(bases ^ u64(n))
    ux = xs.astype(np.int64).view(np.uint64)
    keys = mix64(base_n[:, None] ^ ux[None, :])
    return _transform(env, keys_to_uniform(keys), keys)


def omega(field_: EnvField, n: int, x: int) -> float:
    if n < 1:
        raise EnvError("environment is indexed from n = 1")
    return field_.omega(n, x)


def lambda_(env: EnvModel, beta: float) -> float:
    """Log moment generating function log E[exp(beta * omega)]."""
    if abs(beta) > env.beta_max:
        raise EnvError(f"beta={beta} outside declared finiteness interval [-{env.beta_max}, {env.beta_max}]")
    if env.family == GAUSSIAN:
        return 0.5 * beta * beta
    if env.family == RADEMACHER:
        # log cosh, stable for large |beta|
        b = abs(beta)
        return b + math.log1p(math.exp(-2.0 * b)) - math.log(2.0)
    v = np.asarray(env.values)
    logp = np.log(np.asarray(env.probs))
    return float(special.logsumexp(beta * v + logp))


def lambda_prime(env: EnvModel, beta: float) -> float:
    """Derivative of lambda_; closed form for every built-in family."""
    if abs(beta) >= env.beta_max and not math.isinf(env.beta_max):
        raise EnvError(f"beta={beta} not strictly inside the finiteness interval")
    if abs(beta) > env.beta_max:
        raise EnvError(f"beta={beta} outside declared finiteness interval")
    if env.family == GAUSSIAN:
        return beta
    if env.family == RADEMACHER:
        return math.tanh(beta)
    v = np.asarray(env.values)
    p = np.asarray(env.probs)
    w = p * np.exp(beta * v - np.max(beta * v))
    return float(np.dot(w, v) / w.sum())


def lambda_prime_fd(env: EnvModel, beta: float, h: float = 1e-6) -> float:
    """Central finite difference with one Richardson extrapolation step.

    Reference implementation used to cross-check the closed forms.
    """
    d1 = (lambda_(env, beta + h) - lambda_(env, beta - h)) / (2 * h)
    d2 = (lambda_(env, beta + h / 2) - lambda_(env, beta - h / 2)) / h
    return (4.0 * d2 - d1) / 3.0
