"""Synthetic benchmark: covariance cases, clipped Gaussian contexts, RBF-expansion rewards."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .kernels import KernelSpec, cross_gram, gram, make_spec

log = logging.getLogger(__name__)

CLIP = 10.0
SCALE_RANGE = (0.5, 1.0)


class CovCase(str, enum.Enum):
    LOW_RANK = "low_rank"
    APPROX_LOW_RANK = "approx_low_rank"
    SPECTRAL_DECAY = "spectral_decay"


@dataclass(frozen=True)
class CovarianceSpec:
    case: CovCase
    eigs: np.ndarray
    scale: float
    active: Optional[np.ndarray] = None  # active coordinates (low-rank only)

    @property
    def d(self) -> int:
        return self.eigs.shape[0]

    @property
    def trace_ratio(self) -> float:
        """Average eigenvalue tr(Sigma) / d."""
        return float(self.eigs.sum()) / self.d

    @property
    def eps(self) -> float:
        """The case's smallness parameter: active fraction, minor/major eigenvalue ratio, or tr(Sigma)/d."""
        if self.case is CovCase.LOW_RANK:
            return len(self.active) / self.d
        if self.case is CovCase.APPROX_LOW_RANK:
            return float(self.eigs[1] / self.eigs[0]) if self.d > 1 else 1.0
        return self.trace_ratio


def spectral_decay_profile(d: int) -> np.ndarray:
    """Unit-scale spectral-decay eigenvalues ``10/j`` up to the cut, then a constant fill to total d/2."""
    head = 10.0 / np.arange(1, d + 1)
    csum = np.cumsum(head)
    # largest j with sum_{l<=j} 10/l <= d/4; zero if even the first term is too big
    jt = int(np.searchsorted(csum, d / 4.0, side="right"))
    out = np.empty(d)
    out[:jt] = head[:jt]
    if jt < d:
        out[jt:] = (0.5 * d - csum[jt - 1] if jt > 0 else 0.5 * d) / (d - jt)
    else:
        log.warning("spectral decay at d=%d has no fill block; tr(Sigma)/d is %.4g, not 1/2",
                    d, out.sum() / d)
    return out


def make_covariance(case, d: int, rng: np.random.Generator, active: Optional[int] = None,
                    scale: Optional[float] = None) -> CovarianceSpec:
    """Draw a covariance of the given case; ``scale`` fixes c~ instead of sampling it."""
    case = CovCase(case)
    if d < 2:
        raise ValueError("d must be at least 2")
    c = float(rng.uniform(*SCALE_RANGE)) if scale is None else float(scale)
    if not 0.0 < c <= 1.0:
        raise ValueError("scale must lie in (0, 1]")
    if case is CovCase.LOW_RANK:
        k = d // 2 if active is None else int(active)
        if k > d or k < 1:
            raise ValueError(f"active={k} must lie in [1, d={d}]")
        pos = np.sort(rng.choice(d, size=k, replace=False))
        eigs = np.zeros(d)
        eigs[pos] = c
        return CovarianceSpec(case, eigs, c, pos)
    if case is CovCase.APPROX_LOW_RANK:
        eigs = np.full(d, 0.5 * c)
        eigs[0] = c
        return CovarianceSpec(case, eigs, c)
    # leading eigenvalues 10 c~ / j exceed 1: the construction is kept as-is
    return CovarianceSpec(case, c * spectral_decay_profile(d), c)


def sample_contexts(cov: CovarianceSpec, rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
    """``n`` independent contexts (rows), or one context when ``n`` is None."""
    shape = (cov.d,) if n is None else (n, cov.d)
    z = rng.standard_normal(shape)
    return np.clip(np.sqrt(cov.eigs) * z, -CLIP, CLIP)


def sample_context(cov: CovarianceSpec, rng: np.random.Generator) -> np.ndarray:
    return sample_contexts(cov, rng)


@dataclass(frozen=True)
class RewardFunction:
    centers: np.ndarray
    coeffs: np.ndarray
    kernel: KernelSpec
    rkhs_norm: float

    @property
    def d(self) -> int:
        return self.centers.shape[1]


def reward_kernel(d: int, g: float = 4.0) -> KernelSpec:
    """exp(-||x - x'||^2 / (0.25 d)) is the Gaussian profile with g = 4."""
    return make_spec("gaussian", d, g=g)


def make_reward_from(centers, coeffs, kernel: KernelSpec) -> RewardFunction:
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    coeffs = np.asarray(coeffs, dtype=float)
    G = gram(kernel, centers)
    q = float(coeffs @ G @ coeffs)
    return RewardFunction(centers, coeffs, kernel, float(np.sqrt(max(q, 0.0))))


def make_reward(d: int, M: int, rng: np.random.Generator, g: float = 4.0) -> RewardFunction:
    if M < 1:
        raise ValueError("M must be at least 1")
    coeffs = rng.uniform(-1.0, 1.0, size=M)
    centers = rng.standard_normal((M, d))
    return make_reward_from(centers, coeffs, reward_kernel(d, g))


def eval_reward(f: RewardFunction, x):
    """f(x) for a single context, or an array of values for a batch of rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != f.d:
        raise ValueError(f"context has dimension {x.shape[-1]}, reward expects {f.d}")
    vals = cross_gram(f.kernel, np.atleast_2d(x), f.centers) @ f.coeffs
    return float(vals[0]) if x.ndim == 1 else vals


@dataclass(frozen=True)
class NoiseSpec:
    sigma2: float = 1e-4

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise ValueError("sigma2 must be finite and non-negative")

    def draw(self, rng: np.random.Generator, size=None):
        return np.sqrt(self.sigma2) * rng.standard_normal(size)


def argmax_lowest(values: Sequence[float]) -> int:
    """Index of the maximum, lowest index on ties."""
    return int(np.argmax(np.asarray(values)))


def draw_round(arm_rewards: Sequence[RewardFunction], cov_specs: Sequence[CovarianceSpec],
               rng: np.random.Generator):
    """One round: a context per arm, each arm's mean reward, and the optimal arm (0-based)."""
    if len(arm_rewards) < 2 or len(arm_rewards) != len(cov_specs):
        raise ValueError("need K >= 2 rewards and as many covariance specs")
    contexts = np.stack([sample_context(c, rng) for c in cov_specs])
    means = np.array([eval_reward(f, x) for f, x in zip(arm_rewards, contexts)])
    return contexts, means, argmax_lowest(means)
