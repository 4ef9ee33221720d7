"""Report emission: every experiment writes delimited output (CSV), a
JSON record, and matplotlib figures into a run directory named by the
config hash, so runs are reproducible and comparable."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .corpus import DialogFeature
from .experiments import DegradationPoint, ExperimentRecord
from .metrics import report_csv


def run_directory(base: str | Path, config, label: str) -> Path:
    snapshot = json.dumps(
        {
            "variant": config.variant,
            "seed": config.seed,
            "prune": asdict(config.prune),
            "reader": asdict(config.reader),
            "label": label,
        },
        sort_keys=True,
    )
    digest = hashlib.sha256(snapshot.encode("utf-8")).hexdigest()[:10]
    path = Path(base) / f"{label}-{digest}"
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.json").write_text(snapshot, encoding="utf-8")
    return path


def write_ablation_report(records: list[ExperimentRecord], out_dir: Path) -> None:
    rows = [(r.name, r.report) for r in records]
    (out_dir / "ablation.csv").write_text(report_csv(rows), encoding="utf-8")
    (out_dir / "ablation.json").write_text(
        json.dumps([r.to_json() for r in records], indent=1), encoding="utf-8"
    )
    fig, ax = plt.subplots(figsize=(7, 4))
    names = [r.name for r in records]
    scores = [r.report.f1 for r in records]
    bars = ax.bar(names, scores, color="#4878a8")
    ax.set_ylabel("F1 (%)")
    ax.set_title("Answer F1 by pipeline variant")
    ax.bar_label(bars, fmt="%.1f")
    ax.set_ylim(0, max(scores) * 1.2 if scores else 1)
    fig.tight_layout()
    fig.savefig(out_dir / "ablation.png", dpi=120)
    plt.close(fig)


def write_injection_report(
    records: list[tuple[int, ExperimentRecord]], out_dir: Path
) -> None:
    rows = [(r.name, r.report) for _, r in records]
    (out_dir / "negatives.csv").write_text(report_csv(rows), encoding="utf-8")
    (out_dir / "negatives.json").write_text(
        json.dumps([{"k": k, **r.to_json()} for k, r in records], indent=1),
        encoding="utf-8",
    )
    ks = [k for k, _ in records]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(ks, [r.report.f1 for _, r in records], marker="o", label="overall F1")
    for feature, style in [
        (DialogFeature.CLARIFICATION, "s--"),
        (DialogFeature.TOPIC_SHIFT, "^--"),
        (DialogFeature.TOPIC_RETURN, "v--"),
    ]:
        values = [r.report.per_feature.get(feature) for _, r in records]
        if all(v is not None for v in values):
            ax.plot(ks, values, style, label=feature.value)
    ax.set_xlabel("injected negative turns per question")
    ax.set_ylabel("F1 (%)")
    ax.set_title("Effect of same-topic negative history turns")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_dir / "negatives.png", dpi=120)
    plt.close(fig)


def write_degradation_report(points: list[DegradationPoint], out_dir: Path) -> None:
    lines = ["pruning_agreement,termclass_token_f1,answer_f1"]
    for p in points:
        lines.append(
            f"{p.measured_agreement:.1f},{p.termclass_f1:.2f},{p.answer_f1:.2f}"
        )
    (out_dir / "degradation.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out_dir / "degradation.json").write_text(
        json.dumps([asdict(p) for p in points], indent=1), encoding="utf-8"
    )
    fig, ax = plt.subplots(figsize=(7, 4))
    targets = [p.target for p in points]
    ax.plot(targets, [p.termclass_f1 for p in points], marker="o", label="term classification F1")
    ax.plot(targets, [p.answer_f1 for p in points], marker="s", label="answer F1")
    ax.set_xlabel("pruning agreement with rule decisions (%)")
    ax.set_ylabel("F1 (%)")
    ax.invert_xaxis()
    ax.set_title("Downstream effect of degraded pruning")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_dir / "degradation.png", dpi=120)
    plt.close(fig)


def write_eval_report(record: ExperimentRecord, out_dir: Path) -> None:
    (out_dir / "eval.csv").write_text(
        report_csv([(record.name, record.report)]), encoding="utf-8"
    )
    (out_dir / "eval.json").write_text(
        json.dumps(record.to_json(include_traces=bool(record.traces)), indent=1),
        encoding="utf-8",
    )
    fig, ax = plt.subplots(figsize=(7, 4))
    features = sorted(record.report.per_feature, key=lambda f: f.value)
    bars = ax.bar(
        [f.value for f in features],
        [record.report.per_feature[f] for f in features],
        color="#6a9a58",
    )
    ax.bar_label(bars, fmt="%.1f")
    ax.set_ylabel("mean F1 (%)")
    ax.set_title(f"F1 by dialog feature ({record.name})")
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    fig.savefig(out_dir / "eval.png", dpi=120)
    plt.close(fig)
