"""Kernel profiles with 1/d input scaling, Gram assembly and kernel parameter sequences.

A kernel is ``K(x, x') = h(<x, x'> / d)`` (inner-product family) or
``K(x, x') = h(||x - x'||^2 / d)`` (RBF family). The ``scaled`` flag drops the
1/d factor, which is only used to contrast against fixed-lengthscale kernels.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

log = logging.getLogger(__name__)


class Family(str, enum.Enum):
    INNER_PRODUCT = "inner_product"
    RBF = "rbf"


class Profile(str, enum.Enum):
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"
    RATIONAL_QUADRATIC = "rational_quadratic"
    MATERN = "matern"


_FAMILY_OF = {
    Profile.LINEAR: Family.INNER_PRODUCT,
    Profile.POLYNOMIAL: Family.INNER_PRODUCT,
    Profile.GAUSSIAN: Family.RBF,
    Profile.LAPLACE: Family.RBF,
    Profile.RATIONAL_QUADRATIC: Family.RBF,
    Profile.MATERN: Family.RBF,
}

# required shape parameters per profile, with defaults where one is sensible
_PARAM_NAMES = {
    Profile.LINEAR: (),
    Profile.POLYNOMIAL: ("c", "p"),
    Profile.GAUSSIAN: ("g",),
    Profile.LAPLACE: ("g",),
    Profile.RATIONAL_QUADRATIC: ("alpha", "g"),
    Profile.MATERN: ("ell", "nu"),
}

MATERN_NUS = (2.5, 3.5)


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family, profile ``h`` with its shape parameters, and input dimension ``d``."""

    profile: Profile
    dim: int
    params: tuple = field(default=())  # sorted (name, value) pairs
    scaled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "profile", Profile(self.profile))
        if isinstance(self.params, dict):
            object.__setattr__(self, "params", tuple(sorted(self.params.items())))
        if int(self.dim) != self.dim or self.dim < 1:
            raise KernelError(f"dim must be a positive integer, got {self.dim}")
        names = set(_PARAM_NAMES[self.profile])
        given = {k for k, _ in self.params}
        if given != names:
            raise KernelError(
                f"{self.profile.value} expects parameters {sorted(names)}, got {sorted(given)}"
            )
        _validate_profile(self)

    @property
    def family(self) -> Family:
        return _FAMILY_OF[self.profile]

    def param(self, name: str) -> float:
        return dict(self.params)[name]

    @property
    def scale(self) -> float:
        return float(self.dim) if self.scaled else 1.0

    def to_dict(self) -> dict:
        out = {"profile": self.profile.value}
        out.update(dict(self.params))
        if not self.scaled:
            out["scaled"] = False
        return out


def make_spec(profile: str | Profile, dim: int, scaled: bool = True, **params) -> KernelSpec:
    """Convenience constructor: ``make_spec("gaussian", 100, g=4.0)``."""
    profile = Profile(profile)
    clean = {k: float(v) for k, v in params.items()}
    if profile is Profile.POLYNOMIAL and "p" in clean:
        clean["p"] = float(int(clean["p"]))
    return KernelSpec(profile, int(dim), tuple(sorted(clean.items())), scaled)


def _validate_profile(spec: KernelSpec) -> None:
    p = dict(spec.params)
    prof = spec.profile
    if prof is Profile.POLYNOMIAL:
        if p["p"] < 1 or p["p"] != int(p["p"]):
            raise KernelError("polynomial degree p must be a positive integer")
    if prof in (Profile.GAUSSIAN, Profile.LAPLACE) and not p["g"] > 0:
        raise KernelError("g must be positive")
    if prof is Profile.RATIONAL_QUADRATIC and not (p["alpha"] > 0 and p["g"] > 0):
        raise KernelError("rational quadratic needs alpha > 0 and g > 0")
    if prof is Profile.MATERN:
        if not p["ell"] > 0:
            raise KernelError("Matern lengthscale ell must be positive")
        if p["nu"] not in MATERN_NUS:
            raise KernelError(f"Matern nu must be one of {MATERN_NUS} (closed forms only)")

    if spec.family is Family.INNER_PRODUCT:
        h0, h1, _ = profile_derivs(spec, 0.0)
        # the linear profile has h(0) = 0 yet is a member of the class
        if prof is not Profile.LINEAR and not h0 > 0:
            raise KernelError("inner-product profile needs h(0) > 0")
        if not h1 > 0:
            raise KernelError("inner-product profile needs h'(0) > 0")
    else:
        grid = np.linspace(0.0, 2.0, 33)[1:]
        h, h1, h2 = _derivs_array(spec, grid)
        if not (np.all(h > 0) and np.all(h1 < 0) and np.all(h2 >= 0)):
            raise KernelError("RBF profile needs h > 0, h' < 0 and h' increasing on [0, 2]")


def _h(spec: KernelSpec, t: np.ndarray) -> np.ndarray:
    p = dict(spec.params)
    prof = spec.profile
    if prof is Profile.LINEAR:
        return t
    if prof is Profile.POLYNOMIAL:
        return (t + p["c"]) ** int(p["p"])
    if prof is Profile.GAUSSIAN:
        return np.exp(-p["g"] * t)
    if prof is Profile.LAPLACE:
        return np.exp(-p["g"] * np.sqrt(t))
    if prof is Profile.RATIONAL_QUADRATIC:
        a, g = p["alpha"], p["g"]
        return (1.0 + t / (2.0 * a * g * g)) ** (-a)
    # Matern, closed forms in s = sqrt(2 nu t) / ell
    s = math.sqrt(2.0 * p["nu"]) * np.sqrt(t) / p["ell"]
    if p["nu"] == 2.5:
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    return (1.0 + s + 2.0 * s * s / 5.0 + s ** 3 / 15.0) * np.exp(-s)


def _derivs_array(spec: KernelSpec, t: np.ndarray):
    p = dict(spec.params)
    prof = spec.profile
    t = np.asarray(t, dtype=float)
    if prof is Profile.LINEAR:
        return t.copy(), np.ones_like(t), np.zeros_like(t)
    if prof is Profile.POLYNOMIAL:
        c, n = p["c"], int(p["p"])
        h1 = n * (t + c) ** (n - 1)
        h2 = n * (n - 1) * (t + c) ** (n - 2) if n >= 2 else np.zeros_like(t)
        return (t + c) ** n, h1, h2
    if prof is Profile.GAUSSIAN:
        g = p["g"]
        e = np.exp(-g * t)
        return e, -g * e, g * g * e
    if prof is Profile.LAPLACE:
        if np.any(t <= 0):
            raise KernelError("derivative singularity at origin (Laplace h'(0) is unbounded)")
        g = p["g"]
        r = np.sqrt(t)
        e = np.exp(-g * r)
        h1 = -g / (2.0 * r) * e
        h2 = e * (g * g / (4.0 * t) + g / (4.0 * t * r))
        return e, h1, h2
    if prof is Profile.RATIONAL_QUADRATIC:
        a, g = p["alpha"], p["g"]
        k = 1.0 / (2.0 * a * g * g)
        u = 1.0 + k * t
        return u ** (-a), -a * k * u ** (-a - 1.0), a * (a + 1.0) * k * k * u ** (-a - 2.0)
    a = math.sqrt(2.0 * p["nu"]) / p["ell"]
    s = a * np.sqrt(t)
    e = np.exp(-s)
    if p["nu"] == 2.5:
        h = (1.0 + s + s * s / 3.0) * e
        return h, -(a * a / 6.0) * (1.0 + s) * e, (a ** 4 / 12.0) * e
    h = (1.0 + s + 2.0 * s * s / 5.0 + s ** 3 / 15.0) * e
    h1 = -(a * a / 30.0) * (3.0 + 3.0 * s + s * s) * e
    h2 = (a ** 4 / 60.0) * (1.0 + s) * e
    return h, h1, h2


def profile_derivs(spec: KernelSpec, t: float) -> tuple[float, float, float]:
    """Return ``(h(t), h'(t), h''(t))`` in closed form."""
    if spec.family is Family.RBF and t < 0:
        raise KernelError("RBF profiles are defined for t >= 0")
    h, h1, h2 = _derivs_array(spec, np.asarray(float(t)))
    return float(h), float(h1), float(h2)


def profile_h(spec: KernelSpec, t):
    """Apply the profile elementwise."""
    return _h(spec, np.asarray(t, dtype=float))


def _check_vec(spec: KernelSpec, x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != spec.dim:
        raise KernelError(f"{name} must have length d={spec.dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise KernelError(f"{name} has non-finite entries")
    return x


def eval_kernel(spec: KernelSpec, x, y) -> float:
    x = _check_vec(spec, x, "x")
    y = _check_vec(spec, y, "y")
    if spec.family is Family.INNER_PRODUCT:
        t = float(np.dot(x, y)) / spec.scale
    else:
        diff = x - y
        t = float(np.dot(diff, diff)) / spec.scale
    return float(_h(spec, np.asarray(t)))


def _check_mat(spec: KernelSpec, X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != spec.dim:
        raise KernelError(f"{name} must be N x {spec.dim}, got shape {X.shape}")
    if X.shape[0] < 1:
        raise KernelError(f"{name} must have at least one row")
    if not np.all(np.isfinite(X)):
        raise KernelError(f"{name} has non-finite entries")
    return X


def cross_gram(spec: KernelSpec, A, B) -> np.ndarray:
    """Kernel matrix ``K(A, B)`` of shape ``(len(A), len(B))``."""
    A = _check_mat(spec, A, "A")
    B = _check_mat(spec, B, "B")
    if spec.family is Family.INNER_PRODUCT:
        t = (A @ B.T) / spec.scale
    else:
        t = cdist(A, B, "sqeuclidean") / spec.scale
    return _h(spec, t)


def gram(spec: KernelSpec, X) -> np.ndarray:
    """Symmetric Gram matrix; the strict upper triangle is computed and mirrored."""
    X = _check_mat(spec, X, "X")
    n = X.shape[0]
    if spec.family is Family.INNER_PRODUCT:
        t = (X @ X.T) / spec.scale
        diag = np.einsum("ij,ij->i", X, X) / spec.scale
    else:
        t = cdist(X, X, "sqeuclidean") / spec.scale
        diag = np.zeros(n)
    upper = np.triu(_h(spec, t), k=1)
    return upper + upper.T + np.diag(_h(spec, diag))


@dataclass(frozen=True)
class KernelParams:
    """Coefficients of the linearised Gram matrix.

    ``r``, ``psi``, ``rho`` and ``zeta`` are only populated for the RBF family
    when contexts are supplied.
    """

    alpha: float
    beta: float
    gamma: float
    tau: float
    family: Family
    h1_tau: float = 0.0
    h2_tau: float = 0.0
    r: Optional[float] = None
    psi: Optional[np.ndarray] = None
    rho: Optional[np.ndarray] = None
    zeta: Optional[np.ndarray] = None


def kernel_params(
    spec: KernelSpec,
    sigma_diag=None,
    X=None,
    *,
    empirical: bool = False,
    zeta_curvature: str = "h2",
) -> KernelParams:
    """Kernel parameter sequence (alpha, beta, gamma, tau) for covariance eigenvalues ``sigma_diag``.

    With ``empirical=True`` the covariance trace terms are estimated from ``X``
    (``X^T X / N``) instead. ``zeta_curvature`` picks the coefficient of the
    rank-one ``psi psi^T`` term: ``"h2"`` (second-order Taylor term, default)
    or ``"h1"`` (first derivative, as printed in some statements of the RBF
    linearisation).
    """
    d = spec.dim
    if empirical:
        if X is None:
            raise KernelError("empirical mode needs contexts X")
        Xe = _check_mat(spec, X, "X")
        cov = Xe.T @ Xe / Xe.shape[0]
        tr1 = float(np.trace(cov))
        tr2 = float(np.sum(cov * cov))
    else:
        if sigma_diag is None:
            raise KernelError("sigma_diag is required unless empirical=True")
        s = np.asarray(sigma_diag, dtype=float)
        if s.shape != (d,):
            raise KernelError(f"sigma_diag must have length d={d}")
        if np.any(s < 0):
            raise KernelError("covariance eigenvalues must be non-negative")
        if np.any(s > 1):
            log.warning("covariance operator norm %.3g exceeds 1", s.max())
        tr1 = float(s.sum())
        tr2 = float(np.dot(s, s))
    tau = 2.0 * tr1 / d

    if spec.family is Family.INNER_PRODUCT:
        h0, b, c0 = profile_derivs(spec, 0.0)
        alpha = h0 + c0 * tr2 / d ** 2
        gamma = profile_derivs(spec, tau / 2.0)[0] - h0 - b * tau / 2.0
        return KernelParams(alpha=alpha, beta=b, gamma=gamma, tau=tau, family=spec.family)

    h0 = profile_derivs(spec, 0.0)[0]
    ht, h1, h2 = profile_derivs(spec, tau)
    beta = -2.0 * h1
    if not beta > 0:
        raise KernelError("non-positive beta: profile violates h' < 0")
    alpha = ht + 2.0 * h2 * tr2 / d ** 2
    gamma = h0 + tau * h1 - ht
    out = dict(alpha=alpha, beta=beta, gamma=gamma, tau=tau, family=spec.family,
               h1_tau=h1, h2_tau=h2, r=gamma / beta)
    if X is not None:
        Xm = _check_mat(spec, X, "X")
        psi = np.einsum("ij,ij->i", Xm, Xm) / d - tau / 2.0
        rho = h1 * psi + h2 * psi * psi / 2.0
        if zeta_curvature == "h2":
            zeta = h2 * np.outer(psi, psi)
        elif zeta_curvature == "h1":
            zeta = h1 * np.outer(psi, psi)
        else:
            raise KernelError("zeta_curvature must be 'h1' or 'h2'")
        out.update(psi=psi, rho=rho, zeta=zeta)
    return KernelParams(**out)


@dataclass(frozen=True)
class KernelConsts:
    """Profile extremes used by the lenient exploration budget."""

    h2_min: float  # min of h'' on [0, 1]
    h2_max: float  # max of h'' on [0, 1]
    beta: float
    h1_min: float  # min of h' on [0, 2]
    c_lower: float


def kernel_consts(spec: KernelSpec, params: KernelParams, sigma_diag, grid: int = 2001) -> KernelConsts:
    """Evaluate the derivative extremes on a dense grid.

    ``c_lower`` is ``gamma / (tr(Sigma)/d)`` for the RBF family and ``h''_min``
    for the inner-product family.
    """
    lo = 1e-9 if spec.profile is Profile.LAPLACE else 0.0
    _, _, h2 = _derivs_array(spec, np.linspace(lo, 1.0, grid))
    _, h1, _ = _derivs_array(spec, np.linspace(lo, 2.0, grid))
    h2_min, h2_max = float(h2.min()), float(h2.max())
    tr_ratio = float(np.sum(sigma_diag)) / spec.dim
    if spec.family is Family.RBF:
        c_lower = params.gamma / tr_ratio if tr_ratio > 0 else float("inf")
    else:
        c_lower = h2_min
    return KernelConsts(h2_min=h2_min, h2_max=h2_max, beta=params.beta,
                        h1_min=float(h1.min()), c_lower=c_lower)
