"""Low-rank ablation over the number of active context dimensions.

    python scripts/active_dims_ablation.py --active 1 3 10 20 --out results/active_dims
"""
from __future__ import annotations

import argparse
from pathlib import Path

from kernel_etc.harness.config import config_from_dict
from kernel_etc.harness.episode import aggregate, run_seeds
from kernel_etc.harness.output import csv_text, svg_plot, write_files

HEADER = "active,policy,mean_final_R,se_final_R"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--active", type=int, nargs="+", default=[1, 3, 10, 20])
    ap.add_argument("--policies", nargs="+", default=["etc", "etc_ridge", "etc_linear", "cgp_ucb"])
    ap.add_argument("--d", type=int, default=100)
    ap.add_argument("--T0", type=int, default=100)
    ap.add_argument("--T", type=int, default=2000)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results/active_dims"))
    args = ap.parse_args()

    rows, files = [], {}
    for active in args.active:
        curves = {}
        for policy in args.policies:
            cfg = config_from_dict({
                "d": args.d, "K": 20, "T": args.T, "T0": args.T0, "policy": policy,
                "covariance": {"case": "low_rank", "active": active}, "seeds": list(range(args.seeds))})
            s = aggregate(run_seeds(cfg, args.threads))
            curves[policy] = s
            n = len(s.seeds)
            se = float(s.final_R.std(ddof=1) / n ** 0.5) if n > 1 else 0.0
            rows.append((active, policy, float(s.final_R.mean()), se))
            print(f"active={active:3d} {policy:12s} R(T) = {rows[-1][2]:9.2f} +- {se:.2f}")
        files[args.out / f"active_{active}.svg"] = svg_plot(curves, f"low rank, {active} active dims")
    files[args.out / "summary.csv"] = csv_text(HEADER, rows)
    write_files(files)


if __name__ == "__main__":
    main()
