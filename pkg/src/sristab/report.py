"""Delimited output and figure rendering for experiment results.

CSV content is byte-stable for a fixed configuration: every float is written
in shortest round-trip form and the only varying line is the leading
timestamp comment.
"""

from __future__ import annotations

import datetime as _dt
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["write_runs_csv", "write_summary_csv", "render_gap_figures",
           "write_experiment_outputs"]

RUNS_HEADER = "lambda,seed,n,gap,sup_norm"
SUMMARY_HEADER = "lambda,median_gap,q25,q75,n_delta_0.05"


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def _stamp() -> str:
    return f"# generated {_dt.datetime.now(_dt.timezone.utc).isoformat()}"


def write_runs_csv(result, path: Path) -> None:
    lines = [_stamp(), RUNS_HEADER]
    for cell in result.cells:
        for i in range(cell.gap_indices.size):
            lines.append(",".join([
                _fmt(cell.lam), str(cell.seed), str(int(cell.gap_indices[i])),
                _fmt(cell.gap_values[i]), _fmt(cell.sup_values[i])]))
    path.write_text("\n".join(lines) + "\n")


def write_summary_csv(result, path: Path) -> None:
    lines = [_stamp(), SUMMARY_HEADER]
    for lam in result.config.lambdas:
        q25, q75 = result.quantiles(lam)
        n_d = _first_n_delta(result, lam)
        lines.append(",".join([
            _fmt(lam), _fmt(result.median_gap(lam)), _fmt(q25), _fmt(q75),
            "" if n_d is None else str(n_d)]))
    path.write_text("\n".join(lines) + "\n")


def _first_n_delta(result, lam):
    values = []
    for cell in result.cells:
        if cell.lam == lam and 0.05 in cell.n_delta:
            nd = cell.n_delta[0.05]
            if nd is not None:
                values.append(nd)
    return int(np.median(values)) if values else None


def render_gap_figures(result, out_dir: Path) -> list[Path]:
    """One log-log gap-vs-iteration chart per lambda, SVG markup on disk."""
    paths = []
    for lam in result.config.lambdas:
        fig, ax = plt.subplots(figsize=(6, 4))
        for cell in result.cells:
            if cell.lam != lam or cell.diverged:
                continue
            idx = cell.gap_indices.astype(float) + 1.0
            ax.plot(idx, cell.gap_values, lw=0.8, alpha=0.8,
                    label=f"seed {cell.seed}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("iteration")
        ax.set_ylabel("objective gap")
        ax.set_title(f"{result.config.problem}, smoothing {lam:g}")
        if len(result.config.seeds) <= 10:
            ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        path = out_dir / f"gap_{result.config.problem}_lam{lam:g}.svg"
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths


def write_experiment_outputs(result, out_dir) -> dict:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        runs = out / "runs.csv"
        summary = out / "summary.csv"
        write_runs_csv(result, runs)
        write_summary_csv(result, summary)
        figures = render_gap_figures(result, out)
    except OSError as e:
        raise OSError(f"failed writing outputs under {out}: {e}") from e
    return {"runs": runs, "summary": summary, "figures": figures}
