"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import config as config_mod
from . import corpus, localization, pairing, synthesis, training
from .detector import GridDetector, GridDetectorConfig
from .localization import PROTOCOLS, LabeledSet
from .networks import DiscriminatorConfig, GeneratorConfig

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="cxrsynth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom-gen", help="generate a procedural phantom corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--diseased", type=int, default=60)
    p.add_argument("--healthy", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("prepare-pairs", help="build and cache training pairs")
    p.add_argument("--annotations", required=True, help="annotation CSV")
    p.add_argument("--images", required=True, help="directory of annotated PNGs")
    p.add_argument("--healthy-images", help="directory of healthy PNGs (optional)")
    p.add_argument("--native-resolution", type=float, default=256.0)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train the inpainting model on cached pairs")
    p.add_argument("--pairs", required=True, help="pair cache directory")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="flat key-value training config file")
    p.add_argument("--total-steps", type=int)
    p.add_argument("--checkpoint-interval", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda-l1", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--levels", type=int, default=8, help="generator depth")
    p.add_argument("--base-width", type=int, default=64, help="generator base channels")
    p.add_argument("--resume", help="checkpoint directory to continue from")

    p = sub.add_parser("synthesize", help="generate composite synthetic images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--native-resolution", type=float, default=256.0)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model-tag", default="pix2pix")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval-localization", help="run the dataset protocols")
    p.add_argument("--train-annotations", required=True)
    p.add_argument("--train-images", required=True)
    p.add_argument("--eval-annotations", required=True)
    p.add_argument("--eval-images", required=True)
    p.add_argument("--native-resolution", type=float, default=256.0)
    p.add_argument("--synthetic-dir", help="synthesize output for Ori+Pix2Pix")
    p.add_argument("--synthetic-n-dir", help="synthesize output for Ori+Pix2Pix-N")
    p.add_argument("--budget", type=int, default=1500)
    p.add_argument("--eval-interval", type=int, default=500)
    p.add_argument("--window-radius", type=int, default=500)
    p.add_argument("--iou-threshold", type=float, default=0.1)
    p.add_argument("--report-steps", default="auto",
                   help="comma-separated nominal steps for the summary columns, "
                        "e.g. 5000,10000,15000; 'auto' uses every eval interval")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="summary CSV path")

    p = sub.add_parser("study-serve", help="host the blinded reader study")
    p.add_argument("--config", required=True, help="study config file")
    p.add_argument("--workdir", required=True)
    p.add_argument("--frontend", help="directory of built frontend assets")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    p = sub.add_parser("study-report", help="export reader-study tallies as CSV")
    p.add_argument("--workdir", required=True)
    p.add_argument("--out", required=True)
    return parser


def _load_labeled_set(
    annotations_csv: str, images_dir: str, native_resolution: float
) -> LabeledSet:
    annotations = corpus.parse_annotations(
        annotations_csv, native_resolution=native_resolution
    )
    images = corpus.load_image_dir(images_dir)
    return LabeledSet(annotations=annotations, images=images)


def _load_synthetic(directory: str) -> list:
    manifest = Path(directory) / synthesis.MANIFEST_NAME
    records = []
    with manifest.open(newline="") as handle:
        for row in csv.DictReader(handle):
            image = corpus.load_and_resize(Path(directory) / row["image_id"])
            annotation = corpus.Annotation(
                image_id=row["image_id"],
                pathology=row["label"],
                box=corpus.BBox(float(row["x"]), float(row["y"]),
                                float(row["w"]), float(row["h"])),
                native_resolution=float(image.width),
            )
            records.append(
                synthesis.SyntheticRecord(
                    image=image,
                    parent_annotation=annotation,
                    model_tag=row.get("model_tag", ""),
                    variant_seed=0,
                )
            )
    return records


def _cmd_phantom_gen(args) -> int:
    annotations, images = corpus.generate_phantom_corpus(
        args.diseased, args.healthy, args.seed, args.out
    )
    print(f"wrote {len(images)} phantoms ({len(annotations)} annotated) to {args.out}")
    return 0


def _cmd_prepare_pairs(args) -> int:
    annotations = corpus.parse_annotations(
        args.annotations, native_resolution=args.native_resolution
    )
    images = corpus.load_image_dir(args.images)
    healthy = []
    if args.healthy_images:
        healthy_dir = Path(args.healthy_images)
        healthy_map = corpus.load_image_dir(healthy_dir)
        annotated_ids = {a.image_id for a in annotations}
        # A directory that carries its own annotation manifest is a mixed
        # corpus: everything it annotates is diseased, not healthy.
        own_manifest = healthy_dir / "annotations.csv"
        if own_manifest.exists():
            annotated_ids |= {
                a.image_id
                for a in corpus.parse_annotations(
                    own_manifest, native_resolution=args.native_resolution
                )
            }
        healthy = [img for name, img in sorted(healthy_map.items())
                   if name not in annotated_ids]
    pairs = pairing.make_pairs(annotations, images, healthy, args.seed)
    pairing.save_pairs(pairs, args.out)
    print(f"wrote {len(pairs)} pairs to {args.out}")
    return 0


def _cmd_train(args) -> int:
    overrides = {
        "total_steps": args.total_steps,
        "checkpoint_interval": args.checkpoint_interval,
        "seed": args.seed,
        "lambda_l1": args.lambda_l1,
        "batch_size": args.batch_size,
    }
    cfg = config_mod.training_config_from_file(args.config, overrides)
    pairs = pairing.load_pairs(args.pairs)
    state = training.train(
        pairs,
        cfg,
        args.out,
        generator_config=GeneratorConfig(levels=args.levels, base_width=args.base_width),
        discriminator_config=DiscriminatorConfig(base_width=min(args.base_width, 64)),
        resume_from=args.resume,
    )
    print(f"trained to step {state.step}; checkpoints in {args.out}")
    return 0


def _cmd_synthesize(args) -> int:
    annotations = corpus.parse_annotations(
        args.annotations, native_resolution=args.native_resolution
    )
    images = corpus.load_image_dir(args.images)
    records = synthesis.synthesize_dataset(
        args.checkpoint, annotations, images, args.count, args.seed,
        args.out, model_tag=args.model_tag,
    )
    print(f"wrote {len(records)} synthetic images to {args.out}")
    return 0


def _cmd_eval_localization(args) -> int:
    real_train = _load_labeled_set(
        args.train_annotations, args.train_images, args.native_resolution
    )
    eval_set = _load_labeled_set(
        args.eval_annotations, args.eval_images, args.native_resolution
    )
    synthetic_by_protocol = {
        localization.PROTOCOL_REAL_ONLY: [],
        localization.PROTOCOL_WITH_SYNTH:
            _load_synthetic(args.synthetic_dir) if args.synthetic_dir else None,
        localization.PROTOCOL_WITH_SYNTH_N:
            _load_synthetic(args.synthetic_n_dir) if args.synthetic_n_dir else None,
    }
    reports = []
    for protocol in PROTOCOLS:
        synthetic = synthetic_by_protocol[protocol]
        if synthetic is None:
            logger.info("skipping %s: no synthetic directory given", protocol)
            continue
        detector = GridDetector(GridDetectorConfig(seed=args.seed))
        reports.append(
            localization.run_protocol(
                protocol, real_train, synthetic, eval_set, detector, args.budget,
                eval_interval=args.eval_interval,
                iou_threshold=args.iou_threshold,
                seed=args.seed,
            )
        )
    if args.report_steps == "auto":
        nominal = list(range(args.eval_interval, args.budget + 1, args.eval_interval))
    else:
        nominal = [int(s) for s in args.report_steps.split(",") if s.strip()]
    localization.write_report_csv(reports, args.out, nominal, radius=args.window_radius)
    print(f"wrote localization report to {args.out}")
    return 0


def _cmd_study_serve(args) -> int:
    from . import service, study

    cfg = config_mod.study_config_from_file(args.config)
    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    if (workdir / study.PLAN_FILE).exists():
        plan = study.StudyPlan.load(workdir)
        print(f"loaded existing plan with {plan.total} items")
    else:
        plan = study.build_study(cfg, workdir)
        print(f"built plan with {plan.total} items")
    store = study.JudgmentStore(workdir / "judgments.jsonl")
    app = service.create_app(plan, store, workdir, frontend_dir=args.frontend)
    service.serve(app, host=args.host, port=args.port)
    return 0


def _cmd_study_report(args) -> int:
    from . import study

    workdir = Path(args.workdir)
    plan = study.StudyPlan.load(workdir)
    store = study.JudgmentStore(workdir / "judgments.jsonl")
    tables = study.tally(store.records(), plan)
    reviewers = sorted(plan.orders)
    study.write_tally_csv(tables, plan, args.out, reviewers=reviewers)
    print(f"wrote tally for {len(tables)} reviewer(s) to {args.out}")
    return 0


_HANDLERS = {
    "phantom-gen": _cmd_phantom_gen,
    "prepare-pairs": _cmd_prepare_pairs,
    "train": _cmd_train,
    "synthesize": _cmd_synthesize,
    "eval-localization": _cmd_eval_localization,
    "study-serve": _cmd_study_serve,
    "study-report": _cmd_study_report,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _HANDLERS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logger.error("%s failed: %s", args.command, exc)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
