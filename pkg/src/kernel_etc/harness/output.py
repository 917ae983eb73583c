"""CSV, metadata and SVG writers. Outputs are byte-identical for identical inputs."""
from __future__ import annotations

import io
import json
import os
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .config import ExperimentConfig
from .episode import RegretTrace, RunSummary

ROUND_HEADER = "round,mean_regret,stderr,mean_lenient,stderr_lenient"
SEED_HEADER = "seed,round,arm,optimal,r,R,R_delta"
DIAG_HEADER = "seed,case,d,N,eps,V,B,argmin_k,op_norm_diff,gamma_half,event,mc_l2"

LENIENT_NOTE = ("R_delta applies max(r - Delta, 0) to the realised per-round gap at the drawn "
                "contexts, not to the expected per-round regret; seed averages estimate the expectation.")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def csv_text(header: str, rows) -> str:
    buf = io.StringIO()
    buf.write(header + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def round_csv(summary: RunSummary) -> str:
    rows = zip(range(1, len(summary.mean_R) + 1), summary.mean_R, summary.se_R,
               summary.mean_R_delta, summary.se_R_delta)
    return csv_text(ROUND_HEADER, rows)


def seed_csv(traces: Sequence[RegretTrace]) -> str:
    def rows():
        for tr in traces:
            for t in range(tr.T):
                yield tr.seed, t + 1, tr.arm[t], tr.optimal[t], tr.r[t], tr.R[t], tr.R_delta[t]
    return csv_text(SEED_HEADER, rows())


def diagnostics_csv(rows) -> str:
    return csv_text(DIAG_HEADER, rows)


def write_files(files: Mapping[Path, str | bytes]) -> None:
    """Write every file via a temporary sibling, so a failure leaves no partial output."""
    staged = []
    try:
        for path, content in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.name + ".tmp")
            mode = "wb" if isinstance(content, bytes) else "w"
            with open(tmp, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
                fh.write(content)
            staged.append((tmp, path))
    except OSError as exc:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        raise OSError(f"cannot write {getattr(exc, 'filename', None) or path}: {exc.strerror or exc}") from exc
    for tmp, path in staged:
        os.replace(tmp, path)


def svg_plot(curves: Mapping[str, RunSummary], title: str = "") -> bytes:
    """Mean cumulative regret with a +-1 standard error band per method."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "kernel-etc", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, s in curves.items():
            t = np.arange(1, len(s.mean_R) + 1)
            (line,) = ax.plot(t, s.mean_R, label=label, lw=1.5)
            ax.fill_between(t, s.mean_R - s.se_R, s.mean_R + s.se_R, color=line.get_color(), alpha=0.25)
        ax.set_xlabel("round")
        ax.set_ylabel("cumulative regret")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper left", fontsize=8)
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return buf.getvalue()


def emit_outputs(summary: RunSummary, traces: Sequence[RegretTrace], config: ExperimentConfig,
                 out_dir, svg: bool = True) -> list[Path]:
    if not traces:
        raise ValueError("no traces to write")
    out = Path(out_dir)
    files: dict[Path, str | bytes] = {
        out / "regret.csv": round_csv(summary),
        out / "per_seed.csv": seed_csv(traces),
        out / "config.json": config.to_json() + "\n",
        out / "metadata.json": json.dumps({
            "label": config.label,
            "seeds": list(summary.seeds),
            "final_R": [float(v) for v in summary.final_R],
            "final_R_delta": [float(v) for v in summary.final_R_delta],
            "regret": "realised gap f(x_opt) - f(x_chosen) at the drawn contexts",
            "lenient_regret": LENIENT_NOTE,
            "arms": "0-based",
        }, indent=2, sort_keys=True) + "\n",
    }
    if svg:
        files[out / "regret.svg"] = svg_plot({config.label: summary}, config.label)
    write_files(files)
    return sorted(files)
