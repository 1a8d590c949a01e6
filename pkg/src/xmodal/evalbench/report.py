"""Markdown tables, raw CSVs and box-plot quartiles from evaluation reports."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from xmodal.evalbench.policy_eval import PolicyReport, mean_coverage
from xmodal.evalbench.recon import ReconReport

RECON_RAW_COLUMNS = ("model", "level", "image", "coverage", "mse", "ssim")
POLICY_RAW_COLUMNS = (
    "model", "condition", "level", "episode", "outcome", "steps", "path_length", "total_reward",
    "final_distance", "mean_coverage",
)
BOXPLOT_COLUMNS = ("model", "metric", "level", "min", "q1", "median", "q3", "max")

REPORT_SCHEMA = """# Report files

All numbers are written with 10 significant digits. Rows are ordered by model
name, then level, then image or episode index, so files are byte-identical for
identical inputs.

## recon_table.md
Mean MSE (x1e-3) and mean SSIM (x1e-2) per corruption level (rows) and model
(columns). The best value per level and metric is in bold.

## policy_table.md
Success / Timeout / Crash percentages per condition and obstacle level (rows)
and model (columns). Written only when policy results exist.

## recon_raw.csv
| column | meaning |
|---|---|
| model | model name |
| level | target corruption coverage in [0, 1] |
| image | test-set index |
| coverage | coverage actually achieved by the mask |
| mse | mean squared error of the reconstruction against the clean depth, all pixels |
| ssim | mean SSIM (11x11 Gaussian window, sigma 1.5, valid windows) against the clean depth |

## policy_raw.csv
| column | meaning |
|---|---|
| model | policy name |
| condition | clean or corrupted |
| level | number of obstacles |
| episode | episode index within the cell |
| outcome | success, timeout or crash |
| steps | control steps taken |
| path_length | metres flown |
| total_reward | undiscounted episode return |
| final_distance | metres from the goal at the end |
| mean_coverage | mean achieved mask coverage over the episode's frames |

## boxplot_stats.csv
| column | meaning |
|---|---|
| model | model name |
| metric | mse or ssim |
| level | target corruption coverage |
| min, q1, median, q3, max | quartiles of the per-image metric (linear interpolation) |
"""


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.10g}"


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _as_named(report, default: str) -> dict:
    if report is None:
        return {}
    if isinstance(report, dict):
        return {k: v for k, v in sorted(report.items()) if v}
    return {default: report} if report else {}


def recon_markdown(recon: dict[str, ReconReport]) -> str:
    names = list(recon)
    levels = next(iter(recon.values())).levels
    head = "| Coverage | " + " | ".join(f"{n} MSE (x1e-3) | {n} SSIM (x1e-2)" for n in names) + " |"
    sep = "|---|" + "---|---|" * len(names)
    lines = ["## Reconstruction", "", head, sep]
    for lv in levels:
        mses = [recon[n].mean_mse(lv) for n in names]
        ssims = [recon[n].mean_ssim(lv) for n in names]
        cells = []
        for m, s in zip(mses, ssims):
            ms = f"{m * 1e3:.2f}"
            ss = f"{s * 1e2:.2f}"
            if len(names) > 1 and m == min(mses):
                ms = f"**{ms}**"
            if len(names) > 1 and s == max(ssims):
                ss = f"**{ss}**"
            cells += [ms, ss]
        lines.append(f"| {lv * 100:.0f}% | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def policy_markdown(policy: dict[str, PolicyReport]) -> str:
    names = list(policy)
    keys = sorted({k for rep in policy.values() for k in rep.cells}, key=lambda k: (k[0] != "clean", k[1]))
    head = "| Condition | Level | " + " | ".join(f"{n} S / T / C (%)" for n in names) + " |"
    lines = ["## Navigation", "", head, "|---|---|" + "---|" * len(names)]
    for cond, lv in keys:
        cells = []
        for n in names:
            if (cond, lv) in policy[n].cells:
                p = policy[n].percentages(cond, lv)
                cells.append(f"{p['success']:.2f} / {p['timeout']:.2f} / {p['crash']:.2f}")
            else:
                cells.append("-")
        lines.append(f"| {cond} | {lv} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def emit_report(recon=None, policy=None, out_dir: str | Path = ".") -> list[Path]:
    """Write every report file that has data; returns the paths written.

    ``recon`` / ``policy`` are single reports or ``{name: report}`` maps.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    recon_m = _as_named(recon, "model")
    policy_m = _as_named(policy, "policy")
    written: list[Path] = []
    sections = []

    if recon_m:
        md = recon_markdown(recon_m)
        sections.append(md)
        (out / "recon_table.md").write_text(md)
        raw, box = [], []
        for name, rep in recon_m.items():
            for lv in rep.levels:
                for i, (c, m, s) in enumerate(zip(rep.coverage[lv], rep.mse[lv], rep.ssim[lv])):
                    raw.append((name, float(lv), i, c, m, s))
                for metric, values in (("mse", rep.mse[lv]), ("ssim", rep.ssim[lv])):
                    q = np.quantile(np.asarray(values, dtype=np.float64), [0.0, 0.25, 0.5, 0.75, 1.0])
                    box.append((name, metric, float(lv), *q))
        _write_csv(out / "recon_raw.csv", RECON_RAW_COLUMNS, raw)
        _write_csv(out / "boxplot_stats.csv", BOXPLOT_COLUMNS, box)
        written += [out / "recon_table.md", out / "recon_raw.csv", out / "boxplot_stats.csv"]

    if policy_m:
        md = policy_markdown(policy_m)
        sections.append(md)
        (out / "policy_table.md").write_text(md)
        raw = []
        for name, rep in policy_m.items():
            for (cond, lv), records in sorted(rep.cells.items(), key=lambda kv: (kv[0][0] != "clean", kv[0][1])):
                for k, r in enumerate(records):
                    raw.append(
                        (name, cond, lv, k, r.outcome.name.lower(), r.steps, r.path_length, r.total_reward,
                         r.final_distance, mean_coverage(r))
                    )
        _write_csv(out / "policy_raw.csv", POLICY_RAW_COLUMNS, raw)
        written += [out / "policy_table.md", out / "policy_raw.csv"]

    (out / "report.md").write_text("\n".join(sections))
    (out / "REPORT_SCHEMA.md").write_text(REPORT_SCHEMA)
    written += [out / "report.md", out / "REPORT_SCHEMA.md"]
    return written
