"""Spectral diagnostics: effective bias/variance, linearised Gram matrices,
information gain, Monte-Carlo L2 error and lenient exploration budgets."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg

from .environment import CovarianceSpec, RewardFunction, eval_reward, sample_contexts
from .estimators import FittedModel, predict
from .kernels import Family, KernelConsts, KernelParams, KernelSpec, cross_gram, gram, kernel_params


def sym_eigvalsh(A: np.ndarray) -> np.ndarray:
    """Eigenvalues of the symmetrised matrix, sorted descending."""
    S = 0.5 * (A + A.T)
    return np.linalg.eigvalsh(S)[::-1]


def op_norm_sym(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (A + A.T)))))


def effective_variance(eigs_sigma_hat, gamma: float, beta: float, d: int) -> float:
    if not gamma > 0:
        raise ValueError("degenerate implicit regularization: gamma must be positive")
    if not beta > 0:
        raise ValueError("beta must be positive")
    lam = np.clip(np.asarray(eigs_sigma_hat, dtype=float), 0.0, None)
    r = gamma / beta
    return float(np.sum(lam / (r + lam) ** 2) / d)


def effective_bias(eigs_gram, rkhs_bound: float = 1.0) -> tuple[float, int]:
    """``B^2 * min_k [ sum_{j>k} lambda_j / N + 2 sqrt(k/N) ]`` by a full scan over k = 0..N.

    Returns the minimum and the smallest minimising ``k``.
    """
    lam = np.asarray(eigs_gram, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ValueError("eigenvalues must be a non-empty vector")
    if np.any(np.diff(lam) > 0):
        raise ValueError("eigenvalues must be sorted in descending order")
    lam = np.clip(lam, 0.0, None)
    n = lam.size
    tail = np.concatenate([np.cumsum(lam[::-1])[::-1], [0.0]])  # tail[k] = sum_{j>k}, 0-based shift
    k = np.arange(n + 1)
    cand = tail / n + 2.0 * np.sqrt(k / n)
    kmin = int(np.argmin(cand))
    return float(rkhs_bound ** 2 * cand[kmin]), kmin


@dataclass(frozen=True)
class ErrorDecomposition:
    variance: float
    bias: float
    bias_argmin_k: int
    eigs_sigma_hat: np.ndarray
    eigs_gram: np.ndarray


def error_decomposition(spec: KernelSpec, X, sigma_diag, rkhs_bound: float = 1.0,
                        params: Optional[KernelParams] = None) -> ErrorDecomposition:
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if params is None:
        params = kernel_params(spec, sigma_diag)
    eig_s = np.clip(sym_eigvalsh(X @ X.T / d), 0.0, None)
    eig_k = np.clip(sym_eigvalsh(gram(spec, X)), 0.0, None)
    V = effective_variance(eig_s, params.gamma, params.beta, d)
    B, k = effective_bias(eig_k, rkhs_bound)
    return ErrorDecomposition(V, B, k, eig_s, eig_k)


@dataclass(frozen=True)
class LinApproxReport:
    op_norm_diff: float
    gamma_half: float
    event_holds: bool
    K_lin: np.ndarray


def linearized_gram(X, params: KernelParams) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    S = X @ X.T / d
    K = params.gamma * np.eye(n) + params.alpha * np.ones((n, n)) + params.beta * S
    if params.family is Family.RBF:
        if params.rho is None:
            raise ValueError("RBF linearisation needs psi/rho/zeta computed from X")
        one = np.ones(n)
        K = K + np.outer(params.rho, one) + np.outer(one, params.rho) + params.zeta
    return 0.5 * (K + K.T)


def k_lin(spec: KernelSpec, X, params: KernelParams) -> LinApproxReport:
    if params.family is not spec.family:
        raise ValueError("params were computed for a different kernel family")
    K = gram(spec, X)
    Kl = linearized_gram(X, params)
    diff = op_norm_sym(K - Kl)
    half = params.gamma / 2.0
    return LinApproxReport(diff, half, bool(diff <= half), Kl)


@dataclass(frozen=True)
class MigReport:
    tau2: float
    gain_by_T: np.ndarray


def mig(spec: KernelSpec, X_stream, tau2: float) -> MigReport:
    """Prefix information gains ``0.5 ln det(I + K_t / tau2)`` for t = 1..T.

    Built from the pivots of a growing Cholesky factor of ``K + tau2 I``; each
    pivot squared over tau2 is ``1 + posterior variance / tau2``.
    """
    if not tau2 > 0:
        raise ValueError("tau2 must be positive")
    X = np.atleast_2d(np.asarray(X_stream, dtype=float))
    A = gram(spec, X) + tau2 * np.eye(X.shape[0])
    L = linalg.cholesky(A, lower=True)
    inc = 0.5 * np.log(np.diag(L) ** 2 / tau2)
    return MigReport(tau2, np.cumsum(inc))


def mc_l2_error(model: FittedModel, truth: RewardFunction, cov: CovarianceSpec,
                samples: int, rng: np.random.Generator, batch: int = 4096) -> float:
    """Monte-Carlo estimate of the squared L2 distance between the fitted model and the truth."""
    if samples < 1:
        raise ValueError("samples must be at least 1")
    total = 0.0
    left = samples
    while left > 0:
        m = min(batch, left)
        Xs = sample_contexts(cov, rng, m)
        diff = predict(model, Xs) - eval_reward(truth, Xs)
        total += float(np.sum(diff * diff))
        left -= m
    return total / samples


class Case(str, enum.Enum):
    I = "I"
    II = "II"
    III = "III"


class LenientBudget(NamedTuple):
    T0: int
    eps_ok: bool
    sign_corrected: bool = False  # Case III RBF budget used |h'_min|


def lenient_budget(case, family, Delta: float, eps: float, d: int, K: int, sigma2: float,
                   consts: KernelConsts, rkhs_bound: float = 1.0) -> LenientBudget:
    """Exploration length for lenient-regret EtC and whether the eps smallness condition holds.

    The per-dimension multiplier is floored at 1 and the result rounded up to a
    multiple of ``K``.
    """
    case, family = Case(case), Family(family)
    for name, v in (("Delta", Delta), ("eps", eps), ("d", d), ("K", K), ("sigma2", sigma2)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    B2 = rkhs_bound ** 2
    target = Delta / (4.0 * K)
    corrected = False
    if family is Family.INNER_PRODUCT:
        curv = 0.75 if case is Case.I else 1.5
        eps_ok = curv * B2 * consts.h2_max * eps ** 2 + B2 * consts.beta * eps < target
        if case is Case.III:
            mult = math.floor(eps ** 2 * consts.h2_min * Delta / (64.0 * sigma2 * consts.beta))
        else:
            mult = math.ceil(256.0 * sigma2 * K ** 2 * eps / Delta)
    else:
        if not consts.h1_min < 0:
            raise ValueError("RBF budget needs h'_min < 0")
        eps_ok = -5.0 * B2 * consts.h1_min * eps < target
        if case is Case.I:
            mult = math.ceil(256.0 * sigma2 * K ** 2 * eps / Delta)
        elif case is Case.II:
            mult = math.ceil(256.0 * sigma2 * K ** 2 / (Delta * eps))
        else:
            # printed with h'_min < 0, which makes the budget negative
            mult = math.floor(Delta * eps * consts.c_lower / (32.0 * abs(consts.h1_min) * sigma2))
            corrected = True
    T0 = max(int(mult), 1) * d
    T0 = K * math.ceil(T0 / K)
    return LenientBudget(T0, bool(eps_ok), corrected)
