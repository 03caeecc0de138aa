"""Rendering of evaluation reports: fixed-width table, CSV, and figures."""

from __future__ import annotations

import csv
import io
from collections import Counter
from pathlib import Path

from .bench import EvaluationReport

MACRO_LABEL = "Macro-Average"


def render_table(report: EvaluationReport) -> str:
    rows = [(name, score) for name, score in sorted(report.per_benchmark.items())]
    name_width = max([len(MACRO_LABEL)] + [len(name) for name, _ in rows]) + 2
    lines = [f"{'Benchmark':<{name_width}}{'Correct':>9}{'Total':>7}{'Pass@1 (%)':>12}"]
    lines.append("-" * (name_width + 28))
    for name, score in rows:
        lines.append(
            f"{name:<{name_width}}{score.correct:>9}{score.total:>7}{score.accuracy:>12.2f}"
        )
    lines.append("-" * (name_width + 28))
    lines.append(f"{MACRO_LABEL:<{name_width}}{'':>9}{'':>7}{report.macro_average:>12.2f}")
    return "\n".join(lines)


def render_csv(report: EvaluationReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["benchmark", "correct", "total", "accuracy"])
    for name, score in sorted(report.per_benchmark.items()):
        writer.writerow([name, score.correct, score.total, f"{score.accuracy:.4f}"])
    writer.writerow([MACRO_LABEL, "", "", f"{report.macro_average:.4f}"])
    return buffer.getvalue()


def render_instances_csv(report: EvaluationReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        [
            "id",
            "benchmark",
            "final_objective",
            "ground_truth",
            "verdict",
            "debate_verdict",
            "rounds_used",
            "final_team",
        ]
    )
    for r in report.per_instance:
        writer.writerow(
            [
                r.id,
                r.benchmark,
                "" if r.final_objective is None else repr(r.final_objective),
                repr(r.ground_truth),
                r.verdict,
                r.debate_verdict or "",
                r.rounds_used,
                r.final_team or "",
            ]
        )
    return buffer.getvalue()


def render_figures(report: EvaluationReport, out_dir: str | Path) -> list[Path]:
    """Write accuracy and debate-outcome figures next to the delimited output."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    names = sorted(report.per_benchmark)
    accuracies = [report.per_benchmark[name].accuracy for name in names]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(names) + 2), 4.0))
    ax.bar(names, accuracies, color="#4878a8")
    ax.axhline(report.macro_average, color="#b04030", linestyle="--", linewidth=1.2,
               label=f"macro average {report.macro_average:.1f}%")
    ax.set_ylabel("Pass@1 (%)")
    ax.set_ylim(0, 105)
    ax.set_title("Pass@1 accuracy by benchmark")
    ax.legend(loc="lower right")
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    path = out_dir / "accuracy_by_benchmark.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    verdict_counts = Counter(r.verdict for r in report.per_instance)
    debate_counts = Counter(r.debate_verdict or "error" for r in report.per_instance)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    labels = ["correct", "incorrect", "failed"]
    ax1.bar(labels, [verdict_counts.get(label, 0) for label in labels],
            color=["#3f8f4f", "#c2803f", "#a84040"])
    ax1.set_title("Instance verdicts")
    ax1.set_ylabel("Instances")
    dlabels = sorted(debate_counts)
    ax2.bar(dlabels, [debate_counts[label] for label in dlabels], color="#6a5f9e")
    ax2.set_title("Debate outcomes")
    plt.setp(ax2.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    path = out_dir / "debate_outcomes.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written


def load_report(path: str | Path) -> EvaluationReport:
    return EvaluationReport.from_json(Path(path).read_text(encoding="utf-8"))
