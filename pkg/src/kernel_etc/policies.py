"""Explore-then-Commit and contextual GP-UCB policies.

Arms are 0-based throughout; rounds ``t`` are 1-based.
"""
from __future__ import annotations

import logging
import math
from typing import Optional

import numpy as np
from scipy import linalg

from .environment import argmax_lowest
from .estimators import (Dataset, FittedModel, Kind, cholesky_with_jitter, fit_model, predict)
from .kernels import KernelSpec, cross_gram, gram

log = logging.getLogger(__name__)


class PolicyStateError(RuntimeError):
    pass


class ArmFitError(RuntimeError):
    def __init__(self, arm: int, cause: Exception):
        super().__init__(f"fit failed for arm {arm}: {cause}")
        self.arm = arm
        self.cause = cause


def etc_explore_index(t: int, K: int, T0: Optional[int] = None) -> int:
    """Round-robin arm for exploration round ``t`` (1-based): ``(t - 1) mod K``."""
    if t < 1:
        raise ValueError("rounds start at t = 1")
    if T0 is not None and t > T0:
        raise PolicyStateError("exploration phase over")
    return (t - 1) % K


class EtcPolicy:
    """Explore round-robin for ``T0`` rounds, fit one estimator per arm, then act greedily."""

    def __init__(self, T0: int, K: int, kind=Kind.KERNEL_INTERP, spec: Optional[KernelSpec] = None,
                 lambda2: float = 0.0):
        if K < 2 or T0 < 1:
            raise ValueError("need K >= 2 and T0 >= 1")
        self.T0, self.K = int(T0), int(K)
        self.kind = Kind(kind)
        self.spec = spec
        self.lambda2 = float(lambda2)
        self._X: list[list[np.ndarray]] = [[] for _ in range(K)]
        self._Y: list[list[float]] = [[] for _ in range(K)]
        self.models: Optional[list[FittedModel]] = None

    @property
    def committed(self) -> bool:
        return self.models is not None

    def datasets(self) -> list[Dataset]:
        return [Dataset(np.array(self._X[i]), np.array(self._Y[i]), i) for i in range(self.K)]

    def counts(self) -> list[int]:
        return [len(y) for y in self._Y]

    def choose(self, t: int, contexts) -> int:
        if t <= self.T0:
            return etc_explore_index(t, self.K, self.T0)
        if not self.committed:
            etc_commit(self)
        return etc_select(self, contexts)

    def update(self, t: int, arm: int, x, y: float) -> None:
        if self.committed:
            return
        if t > self.T0:
            raise PolicyStateError("exploration phase over")
        self._X[arm].append(np.asarray(x, dtype=float))
        self._Y[arm].append(float(y))


def etc_commit(policy: EtcPolicy) -> list[FittedModel]:
    if policy.committed:
        raise PolicyStateError("already committed")
    if sum(policy.counts()) < policy.T0:
        raise PolicyStateError("exploration data incomplete")
    models = []
    for data in policy.datasets():
        try:
            models.append(fit_model(policy.kind, policy.spec, data, policy.lambda2))
        except Exception as exc:  # tag with the arm
            raise ArmFitError(data.arm_id, exc) from exc
        if models[-1].jitter > 0:
            log.info("arm %d committed with jitter %.0e", data.arm_id, models[-1].jitter)
    policy.models = models
    return models


def etc_select(policy: EtcPolicy, contexts) -> int:
    if not policy.committed:
        raise PolicyStateError("not committed")
    contexts = np.asarray(contexts, dtype=float)
    preds = [predict(m, contexts[i]) for i, m in enumerate(policy.models)]
    return argmax_lowest(preds)


class _ArmState:
    """Growing Cholesky factor of ``K(X, X) + lambda2 I`` for one arm."""

    def __init__(self, spec: KernelSpec, lambda2: float):
        self.spec = spec
        self.lambda2 = lambda2
        self.X = np.empty((0, spec.dim))
        self.Y = np.empty(0)
        self.L = np.empty((0, 0))
        self.jitter = 0.0
        self.alpha = np.empty(0)

    def __len__(self):
        return self.Y.shape[0]

    def append(self, x: np.ndarray, y: float) -> None:
        n = len(self)
        kxx = float(gram(self.spec, x[None, :])[0, 0]) + self.lambda2 + self.jitter
        if n:
            k = cross_gram(self.spec, self.X, x[None, :])[:, 0]
            l = linalg.solve_triangular(self.L, k, lower=True)
            piv2 = kxx - float(l @ l)
        else:
            l = np.empty(0)
            piv2 = kxx
        self.X = np.vstack([self.X, x])
        self.Y = np.append(self.Y, y)
        if piv2 > 1e-14 * max(kxx, 1.0) and math.isfinite(piv2):
            L = np.zeros((n + 1, n + 1))
            L[:n, :n] = self.L
            L[n, :n] = l
            L[n, n] = math.sqrt(piv2)
            self.L = L
        else:
            A = gram(self.spec, self.X) + self.lambda2 * np.eye(n + 1)
            self.L, self.jitter = cholesky_with_jitter(A)
        self.alpha = linalg.cho_solve((self.L, True), self.Y)

    def log_det(self) -> float:
        """ln det(I + K / lambda2)."""
        if not len(self):
            return 0.0
        return float(2.0 * np.sum(np.log(np.diag(self.L))) - len(self) * math.log(self.lambda2))

    def posterior(self, x: np.ndarray) -> tuple[float, float]:
        prior = float(gram(self.spec, x[None, :])[0, 0])
        if not len(self):
            return 0.0, math.sqrt(max(prior, 0.0))
        k = cross_gram(self.spec, self.X, x[None, :])[:, 0]
        v = linalg.solve_triangular(self.L, k, lower=True)
        return float(k @ self.alpha), math.sqrt(max(prior - float(v @ v), 0.0))


class UcbPolicy:
    """Contextual GP-UCB with a per-arm kernel-ridge posterior.

    ``rkhs_bounds`` are the true RKHS norms of the arms' reward functions;
    ``width_scale`` shrinks the confidence width (1 or 0.1).
    """

    def __init__(self, K: int, spec: KernelSpec, rkhs_bounds, sigma2: float = 1e-4,
                 lambda2: float = 1.0, delta: float = 0.1, width_scale: float = 1.0):
        if not lambda2 > 0:
            raise ValueError("lambda2 must be positive")
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if width_scale not in (1.0, 0.1):
            raise ValueError("width_scale must be 1 or 0.1")
        if len(rkhs_bounds) != K:
            raise ValueError("need one RKHS bound per arm")
        self.K = int(K)
        self.spec = spec
        self.rkhs_bounds = [float(b) for b in rkhs_bounds]
        self.sigma2 = float(sigma2)
        self.lambda2 = float(lambda2)
        self.delta = float(delta)
        self.width_scale = float(width_scale)
        self.arms = [_ArmState(spec, self.lambda2) for _ in range(K)]

    def counts(self) -> list[int]:
        return [len(a) for a in self.arms]

    def choose(self, t: int, contexts) -> int:
        return ucb_select(self, contexts)

    def update(self, t: int, arm: int, x, y: float) -> None:
        self.arms[arm].append(np.asarray(x, dtype=float), float(y))


def ucb_beta(policy: UcbPolicy, arm: int) -> float:
    """``B_i + sigma^2 / lambda * sqrt(2 ln det(I + K/lambda^2) + 2 ln(K/delta))``, times the width scale."""
    if not policy.lambda2 > 0:
        raise ValueError("lambda2 must be positive")
    lam = math.sqrt(policy.lambda2)
    inner = 2.0 * policy.arms[arm].log_det() + 2.0 * math.log(policy.K / policy.delta)
    beta = policy.rkhs_bounds[arm] + policy.sigma2 / lam * math.sqrt(inner)
    return policy.width_scale * beta


def ucb_select(policy: UcbPolicy, contexts) -> int:
    contexts = np.asarray(contexts, dtype=float)
    scores = []
    for i, state in enumerate(policy.arms):
        mean, std = state.posterior(contexts[i])
        scores.append(mean + ucb_beta(policy, i) * std)
    return argmax_lowest(scores)
