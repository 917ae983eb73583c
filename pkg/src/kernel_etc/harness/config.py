"""Experiment configuration: JSON schema, defaults and validation."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Optional

from ..environment import CovCase
from ..estimators import Kind
from ..kernels import KernelSpec, make_spec

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


# named baselines
POLICY_PRESETS = {
    "etc": {"type": "etc", "estimator": "kernel_interp"},
    "etc_ridge": {"type": "etc", "estimator": "kernel_ridge", "lambda2": 1.0},
    "etc_linear": {"type": "etc", "estimator": "linear_min_norm"},
    "etc_linear_ridge": {"type": "etc", "estimator": "linear_ridge", "lambda2": 1.0},
    "cgp_ucb": {"type": "cgp_ucb", "lambda2": 1.0, "width_scale": 1.0},
    "cgp_ucb_ridgeless": {"type": "cgp_ucb", "lambda2": 1e-8, "width_scale": 1.0},
    "cgp_ucb_scaled": {"type": "cgp_ucb", "lambda2": 1.0, "width_scale": 0.1},
    "cgp_ucb_scaled_ridgeless": {"type": "cgp_ucb", "lambda2": 1e-8, "width_scale": 0.1},
}


@dataclass(frozen=True)
class PolicyConfig:
    type: str = "etc"
    estimator: str = "kernel_interp"
    lambda2: float = 0.0
    width_scale: float = 1.0
    delta: float = 0.1

    @property
    def label(self) -> str:
        for name, preset in POLICY_PRESETS.items():
            if _parse_policy(preset, "policy") == self:
                return name
        if self.type == "etc":
            return f"etc_{self.estimator}_l{self.lambda2:g}"
        return f"cgp_ucb_l{self.lambda2:g}_w{self.width_scale:g}"


@dataclass(frozen=True)
class CovarianceConfig:
    case: str = "low_rank"
    active: Optional[int] = None
    scale: Optional[float] = None


@dataclass(frozen=True)
class DiagnosticsConfig:
    N: Optional[int] = None  # per-arm sample count; defaults to T0 // K
    samples: int = 2000
    mig_tau2: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    d: int
    K: int
    T: int
    T0: int
    policy: PolicyConfig
    covariance: CovarianceConfig
    seeds: tuple
    kernel: dict = field(default_factory=lambda: {"profile": "gaussian", "g": 4.0})
    M: int = 500
    reward_g: float = 4.0
    sigma2: float = 1e-4
    Delta: float = 0.0
    identical_arms: bool = False
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()
    name: Optional[str] = None

    def kernel_spec(self) -> KernelSpec:
        params = dict(self.kernel)
        profile = params.pop("profile")
        scaled = params.pop("scaled", True)
        return make_spec(profile, self.d, scaled=scaled, **params)

    @property
    def label(self) -> str:
        return self.name or self.policy.label

    def to_dict(self) -> dict:
        out = asdict(self)
        out["seeds"] = list(self.seeds)
        # only the fields each policy type reads
        drop = ("width_scale", "delta") if self.policy.type == "etc" else ("estimator",)
        out["policy"] = {k: v for k, v in out["policy"].items() if k not in drop}
        out["kernel"] = dict(self.kernel)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True)


_TOP_KEYS = {f for f in ExperimentConfig.__dataclass_fields__}
_REQUIRED = ("d", "K", "T", "T0", "policy", "covariance", "seeds")


def _int(doc: dict, key: str, path: str, minimum: int = 1) -> int:
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {type(v).__name__}")
    if v < minimum:
        raise ConfigError(path, f"must be >= {minimum}")
    return v


def _num(v: Any, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(v).__name__}")
    return float(v)


def _check_keys(doc: dict, allowed, path: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0], "unknown key")


def _parse_policy(doc, path: str) -> PolicyConfig:
    if isinstance(doc, str):
        if doc not in POLICY_PRESETS:
            raise ConfigError(path, f"unknown policy preset {doc!r}")
        doc = POLICY_PRESETS[doc]
    _check_keys(doc, PolicyConfig.__dataclass_fields__, path)
    ptype = doc.get("type", "etc")
    if ptype not in ("etc", "cgp_ucb"):
        raise ConfigError(f"{path}.type", f"must be 'etc' or 'cgp_ucb', got {ptype!r}")
    kw = {"type": ptype}
    if "estimator" in doc:
        if ptype != "etc":
            raise ConfigError(f"{path}.estimator", "only valid for etc")
        try:
            kw["estimator"] = Kind(doc["estimator"]).value
        except ValueError:
            raise ConfigError(f"{path}.estimator", f"unknown estimator {doc['estimator']!r}") from None
    for key in ("lambda2", "width_scale", "delta"):
        if key in doc:
            kw[key] = _num(doc[key], f"{path}.{key}")
    if ptype == "cgp_ucb":
        kw.setdefault("lambda2", 1.0)
        if not kw["lambda2"] > 0:
            raise ConfigError(f"{path}.lambda2", "must be positive for cgp_ucb")
        if kw.get("width_scale", 1.0) not in (1.0, 0.1):
            raise ConfigError(f"{path}.width_scale", "must be 1 or 0.1")
        if not 0 < kw.get("delta", 0.1) < 1:
            raise ConfigError(f"{path}.delta", "must lie in (0, 1)")
    else:
        est = kw.get("estimator", "kernel_interp")
        if est in ("kernel_ridge", "linear_ridge"):
            kw.setdefault("lambda2", 1.0)
        if kw.get("lambda2", 0.0) < 0:
            raise ConfigError(f"{path}.lambda2", "must be non-negative")
    return PolicyConfig(**kw)


def _parse_covariance(doc, path: str) -> CovarianceConfig:
    _check_keys(doc, CovarianceConfig.__dataclass_fields__, path)
    if "case" not in doc:
        raise ConfigError(f"{path}.case", "missing required key")
    try:
        case = CovCase(doc["case"]).value
    except ValueError:
        raise ConfigError(f"{path}.case", f"unknown case {doc['case']!r}") from None
    active = doc.get("active")
    if active is not None:
        active = _int(doc, "active", f"{path}.active")
        if case != "low_rank":
            raise ConfigError(f"{path}.active", "only valid for low_rank")
    scale = doc.get("scale")
    if scale is not None:
        scale = _num(scale, f"{path}.scale")
        if not 0 < scale <= 1:
            raise ConfigError(f"{path}.scale", "must lie in (0, 1]")
    return CovarianceConfig(case, active, scale)


def _parse_diagnostics(doc, path: str) -> DiagnosticsConfig:
    _check_keys(doc, DiagnosticsConfig.__dataclass_fields__, path)
    kw = {}
    if doc.get("N") is not None:
        kw["N"] = _int(doc, "N", f"{path}.N")
    if "samples" in doc:
        kw["samples"] = _int(doc, "samples", f"{path}.samples")
    if "mig_tau2" in doc:
        kw["mig_tau2"] = _num(doc["mig_tau2"], f"{path}.mig_tau2")
        if not kw["mig_tau2"] > 0:
            raise ConfigError(f"{path}.mig_tau2", "must be positive")
    return DiagnosticsConfig(**kw)


def config_from_dict(doc: dict) -> ExperimentConfig:
    _check_keys(doc, _TOP_KEYS, "")
    for key in _REQUIRED:
        if key not in doc:
            raise ConfigError(key, "missing required key")
    kw: dict[str, Any] = {}
    for key in ("d", "K", "T", "T0"):
        kw[key] = _int(doc, key, key)
    if kw["d"] < 2:
        raise ConfigError("d", "must be >= 2")
    if kw["K"] < 2:
        raise ConfigError("K", "must be >= 2")
    if kw["T0"] > kw["T"]:
        raise ConfigError("T0", f"T0={kw['T0']} exceeds T={kw['T']}")
    kw["policy"] = _parse_policy(doc["policy"], "policy")
    kw["covariance"] = _parse_covariance(doc["covariance"], "covariance")
    if kw["covariance"].active is not None and kw["covariance"].active > kw["d"]:
        raise ConfigError("covariance.active", "exceeds d")

    seeds = doc["seeds"]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "expected a non-empty list of integers")
    for s in seeds:
        if isinstance(s, bool) or not isinstance(s, int) or s < 0:
            raise ConfigError("seeds", "seeds must be non-negative integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds", "duplicate seeds")
    kw["seeds"] = tuple(seeds)

    if "kernel" in doc:
        kern = doc["kernel"]
        if not isinstance(kern, dict) or "profile" not in kern:
            raise ConfigError("kernel", "expected an object with a 'profile'")
        kw["kernel"] = dict(kern)
    if "M" in doc:
        kw["M"] = _int(doc, "M", "M")
    for key in ("reward_g", "sigma2", "Delta"):
        if key in doc:
            kw[key] = _num(doc[key], key)
    if kw.get("sigma2", 1e-4) < 0:
        raise ConfigError("sigma2", "must be non-negative")
    if kw.get("Delta", 0.0) < 0:
        raise ConfigError("Delta", "must be non-negative")
    if kw.get("reward_g", 4.0) <= 0:
        raise ConfigError("reward_g", "must be positive")
    if "identical_arms" in doc:
        if not isinstance(doc["identical_arms"], bool):
            raise ConfigError("identical_arms", "expected a boolean")
        kw["identical_arms"] = doc["identical_arms"]
    if "diagnostics" in doc:
        kw["diagnostics"] = _parse_diagnostics(doc["diagnostics"], "diagnostics")
    if doc.get("name") is not None:
        if not isinstance(doc["name"], str):
            raise ConfigError("name", "expected a string")
        kw["name"] = doc["name"]

    cfg = ExperimentConfig(**kw)
    try:
        cfg.kernel_spec()
    except (ValueError, TypeError) as exc:
        raise ConfigError("kernel", str(exc)) from None
    if cfg.policy.type == "etc" and cfg.T0 % cfg.K:
        log.warning("T0=%d is not a multiple of K=%d; arm sample counts will differ by one",
                    cfg.T0, cfg.K)
    return cfg


def parse_config(data: bytes | str) -> ExperimentConfig:
    """Parse a UTF-8 JSON document into a validated config with defaults applied."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError("<document>", f"not UTF-8: {exc}") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"invalid JSON: {exc}") from None
    return config_from_dict(doc)


def with_override(cfg: ExperimentConfig, key: str, value: Any) -> ExperimentConfig:
    """Return a copy with dotted ``key`` set to ``value`` (re-validated)."""
    doc = cfg.to_dict()
    node = doc
    parts = key.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(key, "cannot descend into a non-object")
        node = node[p]
    if parts == ["policy"]:
        doc["policy"] = value
    else:
        node[parts[-1]] = value
    return config_from_dict(doc)
