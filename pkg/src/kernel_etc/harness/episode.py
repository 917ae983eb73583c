"""Seeded bandit episodes, regret accounting and cross-seed aggregation."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..environment import (CovarianceSpec, NoiseSpec, RewardFunction, eval_reward, make_covariance,
                           make_reward, sample_contexts)
from ..estimators import Kind
from ..policies import EtcPolicy, UcbPolicy
from .config import ExperimentConfig

# fixed substream ids so the environment never depends on the policy
STREAMS = {"covariance": 0, "reward": 1, "contexts": 2, "noise": 3, "diagnostics": 4}


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS[name], *extra)))


class EpisodeError(RuntimeError):
    def __init__(self, seed: int, t: int, arm: int, cause: Exception):
        super().__init__(f"seed {seed}: episode aborted at round {t}, arm {arm}: {cause}")
        self.seed, self.round, self.arm = seed, t, arm


@dataclass(frozen=True)
class Environment:
    covs: list[CovarianceSpec]
    rewards: list[RewardFunction]


def build_environment(cfg: ExperimentConfig, seed: int) -> Environment:
    n = 1 if cfg.identical_arms else cfg.K
    rng_c = substream(seed, "covariance")
    rng_r = substream(seed, "reward")
    cc = cfg.covariance
    covs = [make_covariance(cc.case, cfg.d, rng_c, active=cc.active, scale=cc.scale) for _ in range(n)]
    rewards = [make_reward(cfg.d, cfg.M, rng_r, g=cfg.reward_g) for _ in range(n)]
    if cfg.identical_arms:
        covs, rewards = covs * cfg.K, rewards * cfg.K
    return Environment(covs, rewards)


def context_stream(cfg: ExperimentConfig, env: Environment, seed: int) -> np.ndarray:
    """All contexts of an episode, shape ``(T, K, d)``; arm i reads its own substream."""
    if cfg.identical_arms:
        X = sample_contexts(env.covs[0], substream(seed, "contexts", 0), cfg.T)
        return np.repeat(X[:, None, :], cfg.K, axis=1)
    return np.stack([sample_contexts(env.covs[i], substream(seed, "contexts", i), cfg.T)
                     for i in range(cfg.K)], axis=1)


def mean_rewards(env: Environment, contexts: np.ndarray) -> np.ndarray:
    return np.stack([eval_reward(env.rewards[i], contexts[:, i, :])
                     for i in range(contexts.shape[1])], axis=1)


def make_policy(cfg: ExperimentConfig, env: Environment):
    pc = cfg.policy
    if pc.type == "etc":
        kind = Kind(pc.estimator)
        spec = cfg.kernel_spec() if kind.is_kernel else None
        return EtcPolicy(cfg.T0, cfg.K, kind, spec, pc.lambda2)
    return UcbPolicy(cfg.K, cfg.kernel_spec(), [r.rkhs_norm for r in env.rewards], cfg.sigma2,
                     pc.lambda2, pc.delta, pc.width_scale)


def lenient(r: np.ndarray, Delta: float) -> np.ndarray:
    """Phi_Delta(a) = max(a - Delta, 0) applied per round."""
    if math.isinf(Delta):
        return np.zeros_like(r)
    return np.maximum(r - Delta, 0.0)


@dataclass(frozen=True)
class RegretTrace:
    seed: int
    arm: np.ndarray      # chosen I(t), t = 1..T
    optimal: np.ndarray  # i*(t)
    r: np.ndarray        # realised gap at the drawn contexts
    R: np.ndarray
    R_delta: np.ndarray
    T0: int = 0

    @property
    def T(self) -> int:
        return self.r.shape[0]


def run_episode(cfg: ExperimentConfig, seed: int) -> RegretTrace:
    env = build_environment(cfg, seed)
    contexts = context_stream(cfg, env, seed)
    means = mean_rewards(env, contexts)
    noise = NoiseSpec(cfg.sigma2).draw(substream(seed, "noise"), cfg.T)
    policy = make_policy(cfg, env)

    chosen = np.empty(cfg.T, dtype=int)
    for t in range(1, cfg.T + 1):
        ctx = contexts[t - 1]
        arm = -1
        try:
            arm = policy.choose(t, ctx)
            policy.update(t, arm, ctx[arm], means[t - 1, arm] + noise[t - 1])
        except Exception as exc:
            failing = getattr(exc, "arm", arm)
            raise EpisodeError(seed, t, failing, exc) from exc
        chosen[t - 1] = arm
    optimal = np.argmax(means, axis=1)
    idx = np.arange(cfg.T)
    r = means[idx, optimal] - means[idx, chosen]
    rd = lenient(r, cfg.Delta)
    T0 = cfg.T0 if cfg.policy.type == "etc" else 0
    return RegretTrace(seed, chosen, optimal, r, np.cumsum(r), np.cumsum(rd), T0)


def run_seeds(cfg: ExperimentConfig, threads: int = 1) -> list[RegretTrace]:
    if threads <= 1:
        return [run_episode(cfg, s) for s in cfg.seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: run_episode(cfg, s), cfg.seeds))


@dataclass(frozen=True)
class RunSummary:
    seeds: tuple
    final_R: np.ndarray
    final_R_delta: np.ndarray
    mean_R: np.ndarray
    se_R: np.ndarray
    mean_R_delta: np.ndarray
    se_R_delta: np.ndarray


def _mean_se(curves: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = curves.shape[0]
    mean = curves.mean(axis=0)
    if n == 1:
        return mean, np.zeros_like(mean)
    return mean, curves.std(axis=0, ddof=1) / math.sqrt(n)


def aggregate(traces: Sequence[RegretTrace]) -> RunSummary:
    if not traces:
        raise ValueError("no traces to aggregate")
    lengths = {tr.T for tr in traces}
    if len(lengths) != 1:
        raise ValueError(f"traces have different lengths: {sorted(lengths)}")
    R = np.stack([tr.R for tr in traces])
    Rd = np.stack([tr.R_delta for tr in traces])
    mR, sR = _mean_se(R)
    mD, sD = _mean_se(Rd)
    return RunSummary(tuple(tr.seed for tr in traces), R[:, -1].copy(), Rd[:, -1].copy(),
                      mR, sR, mD, sD)
