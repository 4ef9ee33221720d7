"""Command-line interface: corpus generation, training, evaluation,
ablations, noise injection, pruning degradation, and the API server.

Every experiment command writes CSV + JSON + figures under the report
directory (one run folder per config hash).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import DialogFeature, load_quac, save_quac
from .experiments import (
    degradation_sweep,
    eval_items_for,
    evaluate_variant,
    negative_sweep,
    run_ablation,
    split_corpus,
)
from .metrics import report_csv
from .pipeline import ModelBundle, PipelineConfig, train_models
from .reports import (
    run_directory,
    write_ablation_report,
    write_degradation_report,
    write_eval_report,
    write_injection_report,
)
from .synth import DEFAULT_FEATURE_MIX, generate_synthetic


def _base_config(args) -> PipelineConfig:
    config = PipelineConfig(seed=args.seed)
    if getattr(args, "config", None):
        payload = json.loads(Path(args.config).read_text(encoding="utf-8"))
        from dataclasses import replace

        from .nncore import TrainConfig
        from .reader import ReaderConfig
        from .selection import PruneConfig

        config = PipelineConfig(
            variant=payload.get("variant", "full"),
            prune=PruneConfig(**payload.get("prune", {})),
            reader=ReaderConfig(**payload.get("reader", {})),
            train=TrainConfig(**payload.get("train", {})),
            seed=payload.get("seed", args.seed),
        )
    return config


def _parse_mix(raw: str | None) -> dict[DialogFeature, float] | None:
    if not raw:
        return None
    mix = {}
    for part in raw.split(","):
        name, _, value = part.partition("=")
        mix[DialogFeature(name.strip())] = float(value)
    return mix


def cmd_generate(args) -> int:
    corpus = generate_synthetic(args.seed, args.n, _parse_mix(args.mix))
    save_quac(corpus, args.out)
    print(f"wrote {len(corpus)} conversations to {args.out}")
    return 0


def cmd_train(args) -> int:
    corpus = load_quac(args.corpus)
    config = _base_config(args)
    limit = args.limit or len(corpus)
    models, report = train_models(corpus[:limit], config)
    models.save(args.out)
    print(
        f"trained on {report.n_label_conversations} conversations "
        f"({report.n_attention_rows} attention rows, "
        f"{report.n_termclass_rows} classifier rows, "
        f"{report.wall_clock:.1f}s); saved to {args.out}"
    )
    return 0


def cmd_eval(args) -> int:
    corpus = load_quac(args.corpus)
    models = ModelBundle.load(args.models)
    config = _base_config(args).with_variant(args.variant)
    record = evaluate_variant(
        args.variant, eval_items_for(corpus), corpus, models, config,
        keep_traces=args.traces,
    )
    out_dir = run_directory(args.report_dir, config, "eval")
    write_eval_report(record, out_dir)
    print(report_csv([(record.name, record.report)]))
    print(f"report written to {out_dir}")
    return 0


def cmd_ablate(args) -> int:
    corpus = load_quac(args.corpus)
    models = ModelBundle.load(args.models)
    config = _base_config(args)
    variants = args.variants.split(",") if args.variants else None
    records = run_ablation(corpus, models, config, variants)
    out_dir = run_directory(args.report_dir, config, "ablation")
    write_ablation_report(records, out_dir)
    print(report_csv([(r.name, r.report) for r in records]))
    print(f"report written to {out_dir}")
    return 0


def cmd_inject(args) -> int:
    corpus = load_quac(args.corpus)
    pool = load_quac(args.pool)
    models = ModelBundle.load(args.models)
    config = _base_config(args)
    ks = [int(k) for k in args.k.split(",")]
    records = negative_sweep(corpus, pool, models, config, ks, args.seed)
    out_dir = run_directory(args.report_dir, config, "negatives")
    write_injection_report(records, out_dir)
    print(report_csv([(r.name, r.report) for _, r in records]))
    print(f"report written to {out_dir}")
    return 0


def cmd_degrade(args) -> int:
    corpus = load_quac(args.corpus)
    models = ModelBundle.load(args.models)
    config = _base_config(args)
    targets = [float(t) for t in args.target.split(",")]
    points = degradation_sweep(corpus, models, config, targets, args.seed)
    out_dir = run_directory(args.report_dir, config, "degradation")
    write_degradation_report(points, out_dir)
    for p in points:
        print(
            f"target {p.target:.0f}%: agreement {p.measured_agreement:.1f}%, "
            f"term classification F1 {p.termclass_f1:.1f}, answer F1 {p.answer_f1:.2f}"
        )
    print(f"report written to {out_dir}")
    return 0


def cmd_serve(args) -> int:
    from .api import passages_from_corpus, serve_api

    models = ModelBundle.load(args.models)
    config = _base_config(args)
    passages = []
    if args.corpus:
        passages = passages_from_corpus(load_quac(args.corpus))
    serve_api(args.host, args.port, models, config, passages, static_dir=args.static_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convsel",
        description="Conversational QA with dynamic history selection",
    )
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--config", help="JSON file with pipeline config overrides")
    parser.add_argument("--report-dir", default="reports")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mix", help="feature mix, e.g. drill_down=0.4,topic_shift=0.6")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train attention scorer and term classifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int, help="cap training conversations")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate one pipeline variant")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--variant", default="full")
    p.add_argument("--traces", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="compare pipeline variants")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--variants", help="comma-separated variant names")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inject", help="negative-sample injection sweep")
    p.add_argument("--corpus", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--k", default="0,1,3,5,7,9,11")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("degrade", help="pruning degradation sweep")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--target", default="100,70,50")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--models", required=True)
    p.add_argument("--corpus", help="corpus whose passages become selectable")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static-dir", help="serve the console from this directory under /ui")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface clean one-line errors from the CLI
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
