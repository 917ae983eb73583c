"""Minimum-norm kernel interpolation, kernel ridge, and linear estimators."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .kernels import KernelSpec, cross_gram, gram, profile_h, Family

log = logging.getLogger(__name__)

CONTEXT_CLIP = 10.0
JITTERS = (0.0, 1e-12, 1e-10, 1e-8)
PINV_RCOND = 1e-10


class Kind(str, enum.Enum):
    KERNEL_INTERP = "kernel_interp"
    KERNEL_RIDGE = "kernel_ridge"
    LINEAR_MIN_NORM = "linear_min_norm"
    LINEAR_RIDGE = "linear_ridge"

    @property
    def is_kernel(self) -> bool:
        return self in (Kind.KERNEL_INTERP, Kind.KERNEL_RIDGE)


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, msg: str, condition: float):
        super().__init__(f"{msg} (condition estimate {condition:.3e})")
        self.condition = condition


class VarianceUnsupported(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    arm_id: int = 0

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.asarray(self.Y, dtype=float).reshape(-1)
        if X.shape[0] < 1:
            raise ValueError("dataset must hold at least one sample")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("dataset entries must be finite")
        if np.any(np.abs(X) > CONTEXT_CLIP):
            raise ValueError(f"context entries must lie in [-{CONTEXT_CLIP}, {CONTEXT_CLIP}]")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    def __len__(self):
        return self.Y.shape[0]


def cholesky_with_jitter(A: np.ndarray, jitters=JITTERS):
    """Lower Cholesky factor of ``A + j I`` for the first jitter that succeeds.

    Returns ``(L, jitter)``; raises :class:`SingularSystemError` if every jitter fails.
    """
    n = A.shape[0]
    eye = np.eye(n)
    for j in jitters:
        try:
            L = linalg.cholesky(A + j * eye, lower=True, check_finite=True)
        except linalg.LinAlgError:
            continue
        if np.all(np.diag(L) > 0):
            if j > 0:
                log.info("Cholesky needed jitter %.0e on a %dx%d system", j, n, n)
            return L, j
    raise SingularSystemError("singular system", float(np.linalg.cond(A)))


@dataclass(frozen=True)
class FittedModel:
    kind: Kind
    train_X: np.ndarray
    coeffs: np.ndarray
    spec: Optional[KernelSpec] = None
    lambda2: float = 0.0
    jitter: float = 0.0
    chol: Optional[np.ndarray] = None  # factor of K + (lambda2 + jitter) I
    arm_id: int = 0

    def predict(self, x, want_std: bool = False):
        return predict(self, x, want_std)


def fit_model(kind, spec: Optional[KernelSpec], data: Dataset, lambda2: float = 0.0) -> FittedModel:
    kind = Kind(kind)
    if lambda2 < 0:
        raise ValueError("lambda2 must be non-negative")
    X, Y = data.X, data.Y
    if kind.is_kernel:
        if spec is None:
            raise ValueError(f"{kind.value} needs a kernel spec")
        lam = lambda2 if kind is Kind.KERNEL_RIDGE else 0.0
        G = gram(spec, X)
        L, jit = cholesky_with_jitter(G + lam * np.eye(len(Y)))
        coeffs = linalg.cho_solve((L, True), Y)
        return FittedModel(kind, X, coeffs, spec, lam, jit, L, data.arm_id)
    if kind is Kind.LINEAR_MIN_NORM:
        w, *_ = np.linalg.lstsq(X, Y, rcond=PINV_RCOND)
        return FittedModel(kind, X, w, None, 0.0, arm_id=data.arm_id)
    d = X.shape[1]
    w = linalg.solve(X.T @ X + lambda2 * np.eye(d), X.T @ Y, assume_a="pos")
    return FittedModel(kind, X, w, None, lambda2, arm_id=data.arm_id)


def predict(model: FittedModel, x, want_std: bool = False):
    """Posterior mean (and standard deviation) at one context or a batch of contexts.

    Mirrors the sklearn convention: returns ``mean`` or ``(mean, std)``; a 1-D
    ``x`` yields floats, a 2-D ``x`` yields arrays.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xq = x[None, :] if single else x
    if Xq.shape[1] != model.train_X.shape[1]:
        raise ValueError(f"query has dimension {Xq.shape[1]}, model expects {model.train_X.shape[1]}")
    if not model.kind.is_kernel:
        if want_std:
            raise VarianceUnsupported("variance unsupported for linear estimators")
        mean = Xq @ model.coeffs
        return float(mean[0]) if single else mean
    Kq = cross_gram(model.spec, Xq, model.train_X)
    mean = Kq @ model.coeffs
    if not want_std:
        return float(mean[0]) if single else mean
    V = linalg.solve_triangular(model.chol, Kq.T, lower=True)
    prior = _self_kernel(model.spec, Xq)
    var = np.maximum(prior - np.einsum("ij,ij->j", V, V), 0.0)
    std = np.sqrt(var)
    if single:
        return float(mean[0]), float(std[0])
    return mean, std


def _self_kernel(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    if spec.family is Family.INNER_PRODUCT:
        return profile_h(spec, np.einsum("ij,ij->i", X, X) / spec.scale)
    return profile_h(spec, np.zeros(X.shape[0]))


def rkhs_norm_of(model: FittedModel) -> float:
    """RKHS norm of the fitted function; Euclidean norm of ``w`` for linear kinds."""
    if not model.kind.is_kernel:
        return float(np.linalg.norm(model.coeffs))
    G = gram(model.spec, model.train_X)
    q = float(model.coeffs @ G @ model.coeffs)
    return float(np.sqrt(max(q, 0.0)))


def fit_interpolator_gd(
    spec: KernelSpec, data: Dataset, steps: int, rate: float, tol: float = 1e-13
) -> FittedModel:
    """Interpolator coefficients by gradient descent on ``a^T K a / 2 - a^T Y``.

    The gradient is the negative training residual ``Y - K a``; a step size
    above ``2 / lambda_max(K)`` diverges and is reported as such.
    """
    if steps < 1 or not rate > 0:
        raise ValueError("steps and rate must be positive")
    G = gram(spec, data.X)
    Y = data.Y
    a = np.zeros_like(Y)
    resid = Y.copy()
    r0 = float(np.linalg.norm(resid))
    scale = max(r0, 1.0)
    for _ in range(steps):
        r = float(np.linalg.norm(resid))
        if r <= tol * scale:
            break
        if r > 10.0 * r0:
            raise DivergenceError(
                f"gradient descent diverged (residual {r:.3e} vs initial {r0:.3e}); use a smaller rate"
            )
        a = a + rate * resid
        resid = Y - G @ a
    L, jit = cholesky_with_jitter(G)
    return FittedModel(Kind.KERNEL_INTERP, data.X, a, spec, 0.0, jit, L, data.arm_id)
