"""Command line entry point: ``run``, ``sweep`` and ``diagnose``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from ..diagnostics import Case, error_decomposition, k_lin, lenient_budget, mc_l2_error, mig
from ..environment import CovCase, NoiseSpec, eval_reward, sample_contexts
from ..estimators import Dataset, Kind, fit_model
from ..kernels import kernel_consts, kernel_params
from .config import ConfigError, ExperimentConfig, parse_config, with_override
from .episode import aggregate, build_environment, run_seeds, substream
from .output import csv_text, diagnostics_csv, emit_outputs, fmt, svg_plot, write_files

log = logging.getLogger("kernel_etc")

CASE_OF = {CovCase.LOW_RANK: Case.I, CovCase.APPROX_LOW_RANK: Case.II, CovCase.SPECTRAL_DECAY: Case.III}
MIG_HEADER = "seed,t,gain"
BUDGET_HEADER = "seed,case,family,Delta,eps,T0,eps_ok,sign_corrected"
SWEEP_HEADER = "key,value,label,mean_final_R,se_final_R,mean_final_R_delta,se_final_R_delta"


def load_config(path) -> ExperimentConfig:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror or exc}") from None
    return parse_config(data)


def cmd_run(cfg: ExperimentConfig, out: Path, threads: int, svg: bool):
    traces = run_seeds(cfg, threads)
    summary = aggregate(traces)
    emit_outputs(summary, traces, cfg, out, svg=svg)
    return summary


def parse_vary(spec: str) -> tuple[str, list]:
    if "=" not in spec:
        raise ConfigError("--vary", "expected key=v1,v2,...")
    key, raw = spec.split("=", 1)
    values = []
    for tok in raw.split(","):
        try:
            values.append(json.loads(tok))
        except json.JSONDecodeError:
            values.append(tok)
    if not key or not values:
        raise ConfigError("--vary", "expected key=v1,v2,...")
    return key, values


def _se(values) -> float:
    n = len(values)
    return float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def cmd_sweep(cfg: ExperimentConfig, key: str, values: Sequence, out: Path, threads: int, svg: bool):
    cfgs = [with_override(cfg, key, v) for v in values]  # validate every point first
    curves, rows = {}, []
    for v, c in zip(values, cfgs):
        tag = f"{key}={v if isinstance(v, str) else json.dumps(v)}"
        summary = cmd_run(c, out / tag, threads, svg)
        label = tag if key != "policy" else c.label
        curves[label] = summary
        rows.append((key, tag.split("=", 1)[1], label, float(np.mean(summary.final_R)), _se(summary.final_R),
                     float(np.mean(summary.final_R_delta)), _se(summary.final_R_delta)))
    files = {out / "sweep.csv": csv_text(SWEEP_HEADER, rows)}
    if svg:
        files[out / "sweep.svg"] = svg_plot(curves, f"sweep over {key}")
    write_files(files)
    return curves


def diagnose_seed(cfg: ExperimentConfig, seed: int):
    """Diagnostics for arm 0 of one seeded environment."""
    env = build_environment(cfg, seed)
    cov, truth = env.covs[0], env.rewards[0]
    spec = cfg.kernel_spec()
    N = cfg.diagnostics.N or max(cfg.T0 // cfg.K, 1)
    rng = substream(seed, "diagnostics")
    X = sample_contexts(cov, rng, N)
    Y = eval_reward(truth, X) + NoiseSpec(cfg.sigma2).draw(rng, N)

    params = kernel_params(spec, cov.eigs, X)
    dec = error_decomposition(spec, X, cov.eigs, truth.rkhs_norm, params)
    lin = k_lin(spec, X, params)
    model = fit_model(Kind.KERNEL_INTERP, spec, Dataset(X, Y, 0))
    l2 = mc_l2_error(model, truth, cov, cfg.diagnostics.samples, rng)
    case = CASE_OF[CovCase(cov.case)]
    diag_row = (seed, case.value, cfg.d, N, cov.eps, dec.variance, dec.bias, dec.bias_argmin_k,
                lin.op_norm_diff, lin.gamma_half, lin.event_holds, l2)

    gains = mig(spec, X, cfg.diagnostics.mig_tau2).gain_by_T
    mig_rows = [(seed, t + 1, g) for t, g in enumerate(gains)]

    budget_row = None
    if cfg.Delta > 0 and math.isfinite(cfg.Delta):
        consts = kernel_consts(spec, params, cov.eigs)
        b = lenient_budget(case, spec.family, cfg.Delta, cov.eps, cfg.d, cfg.K, cfg.sigma2, consts,
                           truth.rkhs_norm)
        budget_row = (seed, case.value, spec.family.value, cfg.Delta, cov.eps, b.T0, b.eps_ok,
                      b.sign_corrected)
    return diag_row, mig_rows, budget_row


def cmd_diagnose(cfg: ExperimentConfig, out: Path):
    diag, gains, budget = [], [], []
    for seed in cfg.seeds:
        d_row, m_rows, b_row = diagnose_seed(cfg, seed)
        diag.append(d_row)
        gains.extend(m_rows)
        if b_row is not None:
            budget.append(b_row)
    files = {out / "diagnostics.csv": diagnostics_csv(diag), out / "mig.csv": csv_text(MIG_HEADER, gains)}
    if budget:
        files[out / "budget.csv"] = csv_text(BUDGET_HEADER, budget)
    write_files(files)
    return diag


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kernel-etc", description="Kernel EtC bandit experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="experiment config (JSON)")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--threads", type=int, default=1, help="episodes run concurrently")
        sp.add_argument("--no-svg", action="store_true", help="skip the SVG plot")
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("run", help="run seeded episodes and write regret curves"))
    sw = sub.add_parser("sweep", help="repeat `run` over values of one config key")
    common(sw)
    sw.add_argument("--vary", required=True, metavar="KEY=V1,V2,...",
                    help="dotted config key and comma-separated JSON values")
    common(sub.add_parser("diagnose", help="spectral diagnostics, MIG and lenient budget per seed"))
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        cfg = load_config(args.config)
        if args.command == "run":
            s = cmd_run(cfg, out, args.threads, not args.no_svg)
            print(f"{cfg.label}: mean R(T) = {fmt(float(np.mean(s.final_R)))} over {len(s.seeds)} seeds -> {out}")
        elif args.command == "sweep":
            key, values = parse_vary(args.vary)
            cmd_sweep(cfg, key, values, out, args.threads, not args.no_svg)
            print(f"sweep over {key}: {len(values)} points -> {out}")
        else:
            cmd_diagnose(cfg, out)
            print(f"diagnostics for {len(cfg.seeds)} seeds -> {out}")
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
