import csv
import io
import json
import math
from dataclasses import replace
from pathlib import Path

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from kernel_etc.harness.cli import main, parse_vary
from kernel_etc.harness.config import ConfigError, config_from_dict, parse_config, with_override
from kernel_etc.harness.episode import (RegretTrace, aggregate, build_environment, context_stream,
                                        mean_rewards, run_episode, run_seeds)
from kernel_etc.harness.output import emit_outputs, round_csv
from kernel_etc.policies import etc_explore_index

GOLDEN = Path(__file__).parent / "golden"

MINIMAL = {"d": 10, "K": 2, "T": 200, "T0": 40, "policy": "etc",
           "covariance": {"case": "low_rank"}, "seeds": [0]}


def cfg_of(**kw):
    doc = dict(MINIMAL)
    doc.update(kw)
    return config_from_dict(doc)


# config

def test_minimal_defaults():
    cfg = parse_config(json.dumps(MINIMAL).encode())
    assert cfg.M == 500 and cfg.sigma2 == 1e-4 and cfg.Delta == 0.0
    assert cfg.kernel == {"profile": "gaussian", "g": 4.0}
    assert cfg.policy.type == "etc" and cfg.policy.estimator == "kernel_interp"
    ucb = cfg_of(policy={"type": "cgp_ucb"})
    assert ucb.policy.lambda2 == 1.0 and ucb.policy.delta == 0.1 and ucb.policy.width_scale == 1.0


@pytest.mark.parametrize("doc,key", [
    ({**MINIMAL, "T0": 300}, "T0"),
    ({k: v for k, v in MINIMAL.items() if k != "seeds"}, "seeds"),
    ({**MINIMAL, "d": "10"}, "d"),
    ({**MINIMAL, "bogus": 1}, "bogus"),
    ({**MINIMAL, "policy": {"type": "etc", "rate": 1}}, "policy.rate"),
    ({**MINIMAL, "covariance": {"case": "banana"}}, "covariance.case"),
    ({**MINIMAL, "K": 1}, "K"),
    ({**MINIMAL, "policy": {"type": "cgp_ucb", "width_scale": 0.5}}, "policy.width_scale"),
    ({**MINIMAL, "kernel": {"profile": "gaussian", "g": -1}}, "kernel"),
])
def test_rejections_name_key(doc, key):
    with pytest.raises(ConfigError) as err:
        config_from_dict(doc)
    assert err.value.key == key
    assert key in str(err.value)


def test_bad_documents():
    with pytest.raises(ConfigError):
        parse_config(b"\xff\xfe")
    with pytest.raises(ConfigError):
        parse_config("{not json")


def test_warns_when_K_does_not_divide_T0(caplog):
    cfg_of(T0=41)
    assert "not a multiple" in caplog.text


@settings(max_examples=50)
@given(st.integers(2, 50), st.integers(2, 10), st.integers(1, 5), st.sampled_from(
    ["etc", "etc_ridge", "etc_linear", "cgp_ucb", "cgp_ucb_scaled"]), st.sampled_from(
    ["low_rank", "approx_low_rank", "spectral_decay"]), st.lists(st.integers(0, 1000), min_size=1,
                                                              max_size=5, unique=True),
    st.floats(0, 10))
def test_config_round_trip(d, K, mult, policy, case, seeds, Delta):
    cfg = cfg_of(d=d, K=K, T0=K * mult, T=K * mult + 5, policy=policy, covariance={"case": case},
                 seeds=seeds, Delta=Delta)
    assert parse_config(cfg.to_json()) == cfg


def test_override():
    cfg = cfg_of()
    assert with_override(cfg, "d", 20).d == 20
    assert with_override(cfg, "policy", "cgp_ucb").policy.type == "cgp_ucb"
    assert with_override(cfg, "covariance.case", "spectral_decay").covariance.case == "spectral_decay"
    with pytest.raises(ConfigError):
        with_override(cfg, "T0", 10_000)
    assert parse_vary("d=10,20,x") == ("d", [10, 20, "x"])


# episodes

def test_identical_arms_no_regret():
    tr = run_episode(cfg_of(identical_arms=True, K=3, T0=30, M=20), 5)
    assert np.all(tr.r == 0) and tr.R[-1] == 0


def test_infinite_delta():
    tr = run_episode(cfg_of(Delta=math.inf, M=20), 1)
    assert tr.R_delta[-1] == 0 and tr.R[-1] > 0


def test_trace_invariants_and_explore_counts():
    cfg = cfg_of(K=3, T0=30, T=120, M=30, Delta=0.05, seeds=[0, 1, 2])
    for tr in run_seeds(cfg):
        assert np.all(tr.r >= 0)
        assert np.all(np.diff(tr.R) >= 0) and np.all(np.diff(tr.R_delta) >= 0)
        assert np.all(tr.R_delta <= tr.R)
        expect = [etc_explore_index(t, cfg.K, cfg.T0) for t in range(1, cfg.T0 + 1)]
        assert list(tr.arm[:cfg.T0]) == expect


def test_environment_independent_of_policy():
    a = cfg_of(M=20)
    b = with_override(a, "policy", "cgp_ucb")
    ea, eb = build_environment(a, 3), build_environment(b, 3)
    assert np.array_equal(ea.rewards[1].centers, eb.rewards[1].centers)
    assert np.array_equal(context_stream(a, ea, 3), context_stream(b, eb, 3))


def test_replay_from_per_seed_csv(tmp_path):
    cfg = cfg_of(M=50)
    traces = run_seeds(cfg)
    emit_outputs(aggregate(traces), traces, cfg, tmp_path, svg=False)
    rows = list(csv.DictReader(open(tmp_path / "per_seed.csv")))
    env = build_environment(cfg, 0)
    means = mean_rewards(env, context_stream(cfg, env, 0))
    total = 0.0
    for row in rows:
        t = int(row["round"]) - 1
        gap = means[t].max() - means[t, int(row["arm"])]
        assert float(row["r"]) == pytest.approx(gap, abs=1e-15)
        total += gap
    assert float(rows[-1]["R"]) == pytest.approx(total, rel=1e-12)


def test_noiseless_etc_beats_random():
    cfg = cfg_of(d=5, K=3, T0=30, T=300, M=20, sigma2=0.0, seeds=list(range(10)))
    rng = np.random.default_rng(0)
    for tr in run_seeds(cfg):
        ex = slice(cfg.T0, cfg.T)
        etc_err = np.mean(tr.arm[ex] != tr.optimal[ex])
        rand = rng.integers(0, cfg.K, cfg.T - cfg.T0)
        rand_err = np.mean(rand != tr.optimal[ex])
        assert etc_err < rand_err


def test_threads_do_not_change_results():
    cfg = cfg_of(M=20, seeds=[0, 1, 2, 3])
    a, b = run_seeds(cfg, 1), run_seeds(cfg, 3)
    assert [t.seed for t in b] == [0, 1, 2, 3]
    for x, y in zip(a, b):
        assert np.array_equal(x.R, y.R)


# aggregation

def trace(seed, r):
    r = np.asarray(r, dtype=float)
    return RegretTrace(seed, np.zeros(len(r), int), np.zeros(len(r), int), r, np.cumsum(r), np.cumsum(r))


def test_aggregate_examples():
    s = aggregate([trace(0, [1, 2, 0])])
    assert np.array_equal(s.mean_R, [1, 3, 3]) and np.all(s.se_R == 0)
    a = RegretTrace(0, *[np.zeros(3, int)] * 2, np.zeros(3), np.zeros(3), np.zeros(3))
    b = RegretTrace(1, *[np.zeros(3, int)] * 2, np.zeros(3), np.full(3, 2.0), np.full(3, 2.0))
    s = aggregate([a, b])
    np.testing.assert_allclose(s.mean_R, 1.0)
    np.testing.assert_allclose(s.se_R, 1.0)
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(ValueError):
        aggregate([trace(0, [1]), trace(1, [1, 2])])


def test_aggregate_two_pass(rng):
    traces = [trace(i, rng.uniform(0, 1, 50)) for i in range(10)]
    s = aggregate(traces)
    for t in (0, 17, 49):
        vals = [tr.R[t] for tr in traces]
        mean = sum(vals) / 10
        var = sum((v - mean) ** 2 for v in vals) / 9
        assert s.mean_R[t] == pytest.approx(mean, rel=1e-13)
        assert s.se_R[t] == pytest.approx(math.sqrt(var / 10), rel=1e-12)


# outputs

def test_empty_traces_write_nothing(tmp_path):
    with pytest.raises(ValueError):
        emit_outputs(aggregate([trace(0, [1])]), [], cfg_of(), tmp_path / "o")
    assert not (tmp_path / "o").exists()


def test_single_round_csv():
    text = round_csv(aggregate([trace(0, [0.25])]))
    assert text.splitlines() == ["round,mean_regret,stderr,mean_lenient,stderr_lenient", "1,0.25,0,0.25,0"]


def test_golden_outputs(tmp_path):
    cfg = parse_config((GOLDEN / "config.json").read_bytes())
    traces = run_seeds(cfg)
    emit_outputs(aggregate(traces), traces, cfg, tmp_path)
    for name in ("regret.csv", "per_seed.csv", "metadata.json", "regret.svg"):
        assert (tmp_path / name).read_bytes() == (GOLDEN / name).read_bytes(), name


def test_unwritable_path_reports_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    traces = [trace(0, [1.0])]
    with pytest.raises(OSError) as err:
        emit_outputs(aggregate(traces), traces, cfg_of(), blocker / "sub", svg=False)
    assert "file" in str(err.value)


# CLI

def write_cfg(tmp_path, **kw):
    doc = dict(MINIMAL, M=20, seeds=[0, 1])
    doc.update(kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return p


def test_cli_run_deterministic(tmp_path, capsys):
    p = write_cfg(tmp_path)
    assert main(["run", str(p), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", str(p), "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    for name in ("per_seed.csv", "regret.csv", "regret.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_errors(tmp_path, capsys):
    p = write_cfg(tmp_path, T0=999)
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) != 0
    assert "T0" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) != 0
    assert main(["run", str(write_cfg(tmp_path)), "--threads", "0"]) != 0


def test_cli_sweep_and_diagnose(tmp_path):
    p = write_cfg(tmp_path, Delta=0.5)
    out = tmp_path / "s"
    assert main(["sweep", str(p), "--vary", 'policy="etc","etc_linear"', "--out", str(out), "--no-svg"]) == 0
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert [r["label"] for r in rows] == ["etc", "etc_linear"]
    assert (out / "policy=etc" / "per_seed.csv").exists()
    assert not (out / "sweep.svg").exists()
    d = tmp_path / "d"
    assert main(["diagnose", str(p), "--out", str(d)]) == 0
    diag = list(csv.DictReader(open(d / "diagnostics.csv")))
    assert list(diag[0]) == "seed,case,d,N,eps,V,B,argmin_k,op_norm_diff,gamma_half,event,mc_l2".split(",")
    assert len(diag) == 2 and diag[0]["N"] == "20"
    assert (d / "mig.csv").exists() and (d / "budget.csv").exists()


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.sampled_from(["etc", "etc_linear", "cgp_ucb"]),
       st.sampled_from(["low_rank", "approx_low_rank", "spectral_decay"]), st.floats(0, 0.5))
def test_regret_invariants_property(seed, policy, case, Delta):
    cfg = cfg_of(d=6, K=3, T=45, T0=15, M=10, policy=policy, covariance={"case": case}, seeds=[seed],
                 Delta=Delta)
    tr = run_episode(cfg, seed)
    assert np.all(tr.r >= 0)
    assert np.all(np.diff(tr.R) >= 0) and np.all(np.diff(tr.R_delta) >= 0)
    assert np.all(tr.R_delta <= tr.R + 1e-12)
    if policy != "cgp_ucb":
        assert list(tr.arm[:15]) == [(t - 1) % 3 for t in range(1, 16)]
