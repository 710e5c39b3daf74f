"""Report rendering: text, JSON, delimited CSV tables, and figures.

Figures (matplotlib, Agg backend) are written next to the CSV output:
per-class AP bars, precision-recall curves, and HITL acceptance rates.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from lsbseg.annotations.labels import INSTANCE_CLASSES
from lsbseg.metrics import EvalReport


def write_eval_csv(report: EvalReport, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["class", "threshold", "ap", "tp", "fp", "fn"])
        for t in report.thresholds:
            for cls in INSTANCE_CLASSES:
                cnt = report.counts[t][cls]
                writer.writerow(
                    [cls, f"{t:g}", f"{report.per_class_ap[t][cls]:.6f}", cnt["tp"], cnt["fp"], cnt["fn"]]
                )
            writer.writerow(["all_class_mean", f"{t:g}", f"{report.mean_ap[t]:.6f}", "", "", ""])
        if report.cirrus_iou is not None:
            writer.writerow(["cirrus_iou", "", f"{report.cirrus_iou:.6f}", "", "", ""])


def plot_ap_bars(report: EvalReport, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    x = range(len(INSTANCE_CLASSES))
    width = 0.8 / max(len(report.thresholds), 1)
    for i, t in enumerate(report.thresholds):
        offs = [xi + i * width for xi in x]
        ax.bar(
            offs,
            [report.per_class_ap[t][c] for c in INSTANCE_CLASSES],
            width=width,
            label=f"AP{round(t * 100)}",
        )
    ax.set_xticks([xi + 0.4 - width / 2 for xi in x])
    ax.set_xticklabels(INSTANCE_CLASSES, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("average precision")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_pr_curves(report: EvalReport, path: Path) -> None:
    fig, axes = plt.subplots(1, len(report.thresholds), figsize=(6 * len(report.thresholds), 4))
    if len(report.thresholds) == 1:
        axes = [axes]
    for ax, t in zip(axes, report.thresholds):
        for cls in INSTANCE_CLASSES:
            curve = report.curves.get(t, {}).get(cls)
            if not curve or not curve["recall"]:
                continue
            ax.plot(curve["recall"], curve["precision"], label=cls)
        ax.set_title(f"IoU threshold {t:g}")
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.05)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_acceptance_rates(stats: dict, path: Path) -> None:
    per_round = stats.get("per_round", {})
    rounds = sorted(per_round)
    rates = [per_round[r] for r in rounds]
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [str(r) for r in rounds]
    ax.bar(xs, [r if r is not None else 0.0 for r in rates])
    for x, r in zip(xs, rates):
        if r is None:
            ax.annotate("n/a", (x, 0.02), ha="center")
    ax.set_xlabel("review round")
    ax.set_ylabel("acceptance rate")
    ax.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_acceptance_csv(stats: dict, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["group", "key", "rate"])
        overall = stats.get("overall")
        writer.writerow(["overall", "", "" if overall is None else f"{overall:.6f}"])
        for r, rate in sorted(stats.get("per_round", {}).items()):
            writer.writerow(["round", r, "" if rate is None else f"{rate:.6f}"])
        for c, rate in sorted(stats.get("per_class", {}).items()):
            writer.writerow(["class", c, "" if rate is None else f"{rate:.6f}"])


def render_report(
    out_dir: str | Path,
    report: EvalReport | None = None,
    acceptance: dict | None = None,
) -> list[Path]:
    """Write every applicable artifact; returns the paths written."""
    out_dir = Path(out_dir)
    figures = out_dir / "figures"
    figures.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    payload: dict = {}
    lines: list[str] = []
    if report is not None:
        payload["evaluation"] = report.to_dict()
        lines.extend(report.summary_lines())
        write_eval_csv(report, out_dir / "per_class_ap.csv")
        plot_ap_bars(report, figures / "ap_per_class.png")
        plot_pr_curves(report, figures / "pr_curves.png")
        written += [out_dir / "per_class_ap.csv", figures / "ap_per_class.png", figures / "pr_curves.png"]
    if acceptance is not None:
        payload["acceptance"] = acceptance
        overall = acceptance.get("overall")
        lines.append("")
        lines.append(
            "acceptance overall " + ("n/a" if overall is None else f"{overall:.4f}")
        )
        for r, rate in sorted(acceptance.get("per_round", {}).items()):
            lines.append(
                f"acceptance round {r}: " + ("n/a" if rate is None else f"{rate:.4f}")
            )
        write_acceptance_csv(acceptance, out_dir / "acceptance.csv")
        plot_acceptance_rates(acceptance, figures / "acceptance_rates.png")
        written += [out_dir / "acceptance.csv", figures / "acceptance_rates.png"]
    (out_dir / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    written += [out_dir / "report.json", out_dir / "report.txt"]
    return written
