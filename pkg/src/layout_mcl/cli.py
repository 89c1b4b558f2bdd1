"""Command-line entry point: train, generate, eval, toy, serve, inspect.

Each subcommand is a thin shell over one module. Loss variants go by short
names on the command line (wta, rwta, ewta, mcl); full internal names are
accepted too. Runtime failures print a one-line error and exit 1; argparse
handles unknown flags with usage text and exit 2.
"""

import argparse
import json
import math
import sys
from collections import Counter
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .data import (
    CategoryVocabulary,
    CorpusError,
    FilterRules,
    PROFILES,
    layout_from_json,
    layout_to_json,
    load_corpus,
    profile_vocabulary,
)
from .generator import GenerationRequest, GeneratorError, SoftConstraint, generate
from .mcl import MclError, VARIANT_KINDS
from .metrics import (
    Discriminator,
    MetricReport,
    MetricsError,
    alignment,
    diversity_stats,
    fake_positive,
    features,
    fid,
)
from .model import LayoutModel, ModelConfig, ModelError
from .render import layout_svg
from .toylab import ToyError, ToyTask, run_toy, write_trajectory_csv
from .trainer import TrainConfig, TrainerError, train

LOSS_ALIASES = {
    "wta": "vanilla_wta",
    "rwta": "relaxed_wta",
    "ewta": "evolving_wta",
    "mcl": "mixture_wta",
}
TOY_SUMMARY_NAME = "summary.json"

_ERRORS = (
    CorpusError,
    GeneratorError,
    MclError,
    MetricsError,
    ModelError,
    ToyError,
    TrainerError,
    OSError,
    json.JSONDecodeError,
    KeyError,
)


def _loss_kind(name):
    return LOSS_ALIASES.get(name, name)


def _vocabulary_from_args(args):
    if getattr(args, "vocab", None):
        names = json.loads(Path(args.vocab).read_text(encoding="utf-8"))
        return CategoryVocabulary(tuple(names))
    if getattr(args, "profile", None):
        return profile_vocabulary(args.profile)
    return None


def _jsonable(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


# ---------------------------------------------------------------------------
# subcommands


def _cmd_train(args):
    vocabulary = _vocabulary_from_args(args)
    if vocabulary is None:
        print("error: train needs --profile or --vocab for the category names", file=sys.stderr)
        return 1
    rules = FilterRules(max_objects=args.max_objects, band_tolerance=args.band_tolerance)
    corpus, report = load_corpus(args.data, vocabulary, rules)
    if report.dropped_count or report.malformed_count:
        print(f"loaded {report.loaded} layouts ({report.dropped_count} dropped, {report.malformed_count} malformed)")
    config = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        loss=_loss_kind(args.loss),
        epsilon=args.rwta_eps,
        M=args.m,
        seed=args.seed,
        pair_tau=args.pair_tau,
    )
    scale = ModelConfig.paper if args.scale == "paper" else ModelConfig.desk
    model_config = scale(len(vocabulary))
    if args.raster_res is not None:
        model_config = replace(
            model_config, encoder=replace(model_config.encoder, raster_res=args.raster_res)
        )
    result = train(corpus, vocabulary, config, model_config=model_config, out_dir=Path(args.out))
    for entry in result.log:
        print(
            f"epoch {entry['epoch']}: total={entry['total']:.4f}"
            f" paired={entry['paired_count']} unpaired_mass={entry['unpaired_mass']:.4f}"
        )
    print(f"checkpoint: {result.checkpoint_dir} (best epoch {result.best_epoch})")
    return 0


def _cmd_generate(args):
    model, _ = LayoutModel.load(args.checkpoint)
    vocabulary = model.vocabulary
    hard = ()
    if args.hard:
        text = Path(args.hard).read_text(encoding="utf-8").strip()
        hard = tuple(layout_from_json(text, vocabulary).objects)
    soft = []
    if args.soft:
        for entry in json.loads(Path(args.soft).read_text(encoding="utf-8")):
            size = entry.get("size")
            soft.append(
                SoftConstraint(
                    category=vocabulary.index(entry["category"]),
                    size=tuple(float(v) for v in size) if size is not None else None,
                )
            )
    request = GenerationRequest(
        hard=hard,
        soft=tuple(soft),
        count=args.count,
        max_objects=args.max_objects,
        seed=args.seed,
        temperature=args.temperature,
    )
    layouts = generate(request, model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "layouts.jsonl", "w", encoding="utf-8") as fh:
        for layout in layouts:
            fh.write(layout_to_json(layout, vocabulary))
            fh.write("\n")
    if args.svg:
        for j, layout in enumerate(layouts):
            (out / f"candidate_{j:02d}.svg").write_text(layout_svg(layout, vocabulary), encoding="utf-8")
    print(f"wrote {len(layouts)} layouts to {out / 'layouts.jsonl'}")
    return 0


def _inferred_vocabulary(paths):
    """Category names in first-seen order across the given corpus files."""
    names = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                for entry in json.loads(line)["objects"]:
                    if entry["category"] not in names:
                        names.append(entry["category"])
    return CategoryVocabulary(tuple(names))


def _cmd_eval(args):
    vocabulary = _vocabulary_from_args(args)
    if vocabulary is None:
        if args.discriminator:
            # inferred name order would not match the discriminator's training
            print(
                "error: eval with --discriminator needs --profile or --vocab"
                " so category indices match the discriminator",
                file=sys.stderr,
            )
            return 1
        vocabulary = _inferred_vocabulary([args.real, args.generated])
    real, _ = load_corpus(args.real, vocabulary)
    generated, _ = load_corpus(args.generated, vocabulary)
    diversity = diversity_stats(generated)
    report = MetricReport(
        alignment=alignment(generated),
        diversity_distinct=diversity.distinct,
        diversity_frequencies=diversity.frequencies,
    )
    if args.discriminator:
        disc = Discriminator.load(args.discriminator)
        report.fake_positive = fake_positive(generated, disc)
        report.fid = fid(features(real, disc), features(generated, disc))
    doc = {key: _jsonable(value) for key, value in report.to_dict().items()}
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    print(f"alignment={report.alignment:.6f} fid={report.fid} fake_positive={report.fake_positive}")
    print(f"report: {args.report}")
    return 0


def _toy_ground_truths(count):
    from .toylab import DEFAULT_GROUND_TRUTHS

    if count <= len(DEFAULT_GROUND_TRUTHS):
        return DEFAULT_GROUND_TRUTHS[:count]
    extra = np.random.default_rng(0).uniform(0.15, 0.85, size=(count, 2))
    return tuple(tuple(float(v) for v in p) for p in extra)


def _cmd_toy(args):
    task = ToyTask(ground_truths=_toy_ground_truths(args.gts), M=args.m)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kind = _loss_kind(args.variant)
    runs = []
    for seed in range(args.seeds):
        snapshots, summary = run_toy(task, kind, steps=args.steps, seed=seed, learning_rate=args.lr)
        write_trajectory_csv(snapshots, out / f"trajectory_seed{seed}.csv")
        runs.append(asdict(summary))
        print(
            f"seed {seed}: paired={summary.paired_count} unpaired_mass={summary.unpaired_mass:.4f}"
            f" poor={summary.poor_probability:.3f}"
        )
    doc = {
        "variant": kind,
        "m": args.m,
        "steps": args.steps,
        "learning_rate": args.lr,
        "ground_truths": [list(p) for p in task.ground_truths],
        "P": Counter(run["paired_count"] for run in runs).most_common(1)[0][0],
        "unpaired_mass": float(np.mean([run["unpaired_mass"] for run in runs])),
        "runs": runs,
    }
    with open(out / TOY_SUMMARY_NAME, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    print(f"summary: {out / TOY_SUMMARY_NAME}")
    return 0


def _cmd_serve(args):
    from .service import serve

    serve(args.checkpoint, host=args.host, port=args.port)
    return 0


def _inspect_model(path):
    with open(path / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    print(json.dumps(manifest, indent=2, sort_keys=True))
    paired = np.asarray(manifest.get("paired", []), dtype=bool)
    names = manifest.get("vocabulary", [])
    if paired.size:
        per_category = ", ".join(
            f"{names[c] if c < len(names) else c}={int(paired[c].sum())}" for c in range(paired.shape[0])
        )
        print(f"P: {int(paired.sum())} of {paired.size} ({per_category})")
    log = manifest.get("log", [])
    if log:
        print(f"unpaired phi mass: {log[-1]['unpaired_mass']:.6f} (epoch {log[-1]['epoch']})")
    else:
        print("unpaired phi mass: not recorded")
    return 0


def _inspect_toy(path):
    with open(path / TOY_SUMMARY_NAME, encoding="utf-8") as fh:
        summary = json.load(fh)
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"P: {summary['P']}")
    print(f"unpaired phi mass: {summary['unpaired_mass']:.6f}")
    return 0


def _cmd_inspect(args):
    path = Path(args.checkpoint)
    if (path / "manifest.json").exists():
        return _inspect_model(path)
    if (path / TOY_SUMMARY_NAME).exists():
        return _inspect_toy(path)
    print(f"error: {path} has neither a checkpoint manifest nor a toy summary", file=sys.stderr)
    return 1


# ---------------------------------------------------------------------------
# parser


def _add_vocabulary_flags(sub):
    sub.add_argument("--profile", choices=PROFILES, help="built-in vocabulary by corpus profile")
    sub.add_argument("--vocab", help="JSON array of category names")


def _build_parser():
    parser = argparse.ArgumentParser(prog="layout-mcl", description="Multi-choice layout generation toolkit")
    subparsers = parser.add_subparsers(dest="command", required=True)
    loss_names = sorted(LOSS_ALIASES) + list(VARIANT_KINDS)

    sub = subparsers.add_parser("train", help="fit a model on a JSON-lines corpus")
    sub.add_argument("--data", required=True, help="JSON-lines corpus path")
    _add_vocabulary_flags(sub)
    sub.add_argument("--loss", choices=loss_names, default="mcl")
    sub.add_argument("--m", type=int, default=10, help="hypotheses per category")
    sub.add_argument("--epochs", type=int, default=10)
    sub.add_argument("--lr", type=float, default=0.001)
    sub.add_argument("--batch", type=int, default=64)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--rwta-eps", type=float, default=0.05, help="relaxed variant epsilon")
    sub.add_argument("--pair-tau", type=float, default=0.05, help="pairing win tolerance")
    sub.add_argument("--max-objects", type=int, default=10, help="drop longer layouts")
    sub.add_argument("--band-tolerance", type=float, default=0.02, help="reading-order band height")
    sub.add_argument("--raster-res", type=int, default=None, help="override raster resolution")
    sub.add_argument("--scale", choices=("desk", "paper"), default="desk")
    sub.add_argument("--out", required=True, help="checkpoint directory")
    sub.set_defaults(run=_cmd_train)

    sub = subparsers.add_parser("generate", help="decode candidate layouts from a checkpoint")
    sub.add_argument("--checkpoint", required=True)
    sub.add_argument("--hard", help="JSON layout document used as a verbatim prefix")
    sub.add_argument("--soft", help="JSON array of {category, size?} constraints")
    sub.add_argument("--count", type=int, default=1)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--max-objects", type=int, default=10)
    sub.add_argument("--temperature", type=float, default=1.0)
    sub.add_argument("--svg", action="store_true", help="also write one SVG per candidate")
    sub.add_argument("--out", required=True, help="output directory")
    sub.set_defaults(run=_cmd_generate)

    sub = subparsers.add_parser("eval", help="score a generated corpus against a real one")
    sub.add_argument("--real", required=True)
    sub.add_argument("--generated", required=True)
    sub.add_argument("--discriminator", help="discriminator checkpoint for FID and fake-positive")
    _add_vocabulary_flags(sub)
    sub.add_argument("--report", required=True, help="output JSON path")
    sub.set_defaults(run=_cmd_eval)

    sub = subparsers.add_parser("toy", help="2D point toy runs with trajectory CSVs")
    sub.add_argument("--variant", choices=loss_names, default="mcl")
    sub.add_argument("--gts", type=int, default=3, help="number of ground-truth points")
    sub.add_argument("--m", type=int, default=10)
    sub.add_argument("--steps", type=int, default=3000)
    sub.add_argument("--seeds", type=int, default=10, help="run seeds 0..seeds-1")
    sub.add_argument("--lr", type=float, default=0.01)
    sub.add_argument("--out", required=True, help="output directory")
    sub.set_defaults(run=_cmd_toy)

    sub = subparsers.add_parser("serve", help="run the HTTP generation service")
    sub.add_argument("--checkpoint", required=True)
    sub.add_argument("--host", default="127.0.0.1")
    sub.add_argument("--port", type=int, default=8000)
    sub.set_defaults(run=_cmd_serve)

    sub = subparsers.add_parser("inspect", help="print a checkpoint's manifest and pairing state")
    sub.add_argument("--checkpoint", required=True, help="model checkpoint or toy output directory")
    sub.set_defaults(run=_cmd_inspect)

    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.run(args)
    except _ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
