"""Command-line surface: datagen, training, editing, evaluation, ablation, analysis.

Exit codes: 0 success, 1 usage error, 2 backend error, 3 data error. Every run
writes a manifest with enough information to reproduce it (`contredit rerun`).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from contredit import __version__
from contredit.core import EngineError, LabeledExample, SearchConfig, tokenize
from contredit.data import (
    SynthConfig,
    generate_synthetic_reviews,
    preprocess,
    read_dataset,
    read_outcomes,
    write_dataset,
    write_outcomes,
)
from contredit.editor import InfillerConfig, ReferenceInfiller, train_reference_infiller
from contredit.masker import MaskStrategy
from contredit.metrics import (
    MetricsReport,
    MetricsRow,
    ReferenceNgramScorer,
    fluency_ratio,
)
from contredit.analysis import artifact_stats
from contredit.predictor import ReferenceClassifier, TrainConfig, train_reference_classifier
from contredit.remote import BackendError, Endpoint, ProtocolError, RemoteEditor, \
    RemoteFluencyScorer, RemotePredictor
from contredit.search import EditOutcome, find_edits, instance_rng
from contredit.stain import StainSpec, stain_corpus

ENDPOINT_ENV = "CONTREDIT_ENDPOINT"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BACKEND = 2
EXIT_DATA = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _is_url(spec: str) -> bool:
    return spec.startswith("http://") or spec.startswith("https://")


def _resolve_url(spec: str) -> str | None:
    if spec == "remote":
        url = os.environ.get(ENDPOINT_ENV)
        if not url:
            raise BackendError(f"backend 'remote' requires the {ENDPOINT_ENV} variable")
        return url
    return spec if _is_url(spec) else None


def resolve_predictor(spec: str):
    url = _resolve_url(spec)
    if url is not None:
        return RemotePredictor(Endpoint(url))
    return ReferenceClassifier.load(spec)


def resolve_editor(spec: str, predictor, cfg: SearchConfig):
    url = _resolve_url(spec)
    if url is not None:
        return RemoteEditor(Endpoint(url), predictor=predictor, search_config=cfg)
    return ReferenceInfiller.load(spec)


def resolve_fluency(spec: str):
    url = _resolve_url(spec)
    if url is not None:
        return RemoteFluencyScorer(Endpoint(url))
    return ReferenceNgramScorer.load(spec)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return cfg


def load_search_config(path: str | None, seed: int | None) -> SearchConfig:
    raw = _load_config_file(path).get("search", {})
    if seed is not None:
        raw = {**raw, "rng_seed": seed}
    return SearchConfig(**raw)


def load_train_config(path: str | None, args) -> TrainConfig:
    """File section 'train' provides the base; explicit CLI flags override."""
    raw = dict(_load_config_file(path).get("train", {}))
    for key, flag in (("learning_rate", "lr"), ("epochs", "epochs"), ("dim", "dim"),
                      ("hidden", "hidden"), ("l2_penalty", "l2"), ("rng_seed", "seed")):
        value = getattr(args, flag)
        if value is not None:
            raw[key] = value
    return TrainConfig(**raw)


@dataclass
class RunManifest:
    command: str
    args: dict
    seed: int
    backends: dict
    config: dict
    timing_s: float = 0.0
    counters: dict = field(default_factory=dict)
    version: str = __version__

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _manifest_args(args: argparse.Namespace) -> dict:
    skip = {"func", "command"}
    return {k: v for k, v in vars(args).items() if k not in skip}


@dataclass
class InstanceFailure:
    example_id: str
    error: str
    kind: str  # "backend" or "data"


def run_edit_batch(examples, predictor, editor, cfg: SearchConfig, *,
                   strategy: MaskStrategy = MaskStrategy.GRADIENT,
                   stage2_label: bool = True, contrast_label: str | None = None,
                   attribution_on: str = "predicted",
                   jobs: int = 1) -> tuple[list[EditOutcome], list[InstanceFailure]]:
    """Edit every instance; per-instance rng streams make results independent
    of scheduling, so any jobs count yields identical outcomes."""

    def work(ex: LabeledExample) -> EditOutcome:
        return find_edits(
            preprocess(ex.text), predictor, editor, cfg,
            contrast_label=contrast_label, strategy=strategy,
            editor_uses_contrast_label=stage2_label, attribution_on=attribution_on,
            rng=instance_rng(cfg.rng_seed, ex.id), example_id=ex.id)

    results: list[EditOutcome | InstanceFailure] = [None] * len(examples)

    def run_one(i: int, ex: LabeledExample) -> None:
        try:
            results[i] = work(ex)
        except (BackendError, ProtocolError) as exc:
            results[i] = InstanceFailure(ex.id, str(exc), "backend")
        except (EngineError, ValueError) as exc:
            results[i] = InstanceFailure(ex.id, str(exc), "data")

    if jobs <= 1:
        for i, ex in enumerate(examples):
            run_one(i, ex)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(lambda pair: run_one(*pair), enumerate(examples)))

    outcomes = [r for r in results if isinstance(r, EditOutcome)]
    failures = [r for r in results if isinstance(r, InstanceFailure)]
    return outcomes, failures


def metrics_from_outcomes(outcomes, failures=(), scorer=None) -> MetricsReport:
    report = MetricsReport()
    for o in outcomes:
        row = MetricsRow(id=o.example_id or "", flipped=o.best is not None,
                         contrast_label=o.contrast_label)
        if o.best is not None:
            row.minimality = o.best.minimality
            row.contrast_prob = o.best.contrast_prob
            if scorer is not None:
                row.fluency = fluency_ratio(scorer, tokenize(o.original_text),
                                            o.best.tokens)
        report.rows.append(row)
    for f in failures:
        report.rows.append(MetricsRow(id=f.example_id, flipped=False, contrast_label=""))
    return report


def _counter_totals(outcomes) -> dict:
    return {
        "predictor_forward_calls": sum(o.counters.predictor_forward_calls for o in outcomes),
        "editor_samples": sum(o.counters.editor_samples for o in outcomes),
        "attribution_calls": sum(o.counters.attribution_calls for o in outcomes),
    }


def _sidecar_manifest(command: str, args, cfg_echo: dict) -> None:
    """Commands whose output is a single file park the manifest next to it."""
    manifest = RunManifest(command=command, args=_manifest_args(args),
                           seed=getattr(args, "seed", 0) or 0, backends={},
                           config=cfg_echo)
    manifest.write(args.out + ".manifest.json")


def cmd_datagen(args) -> int:
    cfg = SynthConfig(n_examples=args.n, rating_token_probability=args.rating_prob,
                      len_lo=args.len_lo, len_hi=args.len_hi, rng_seed=args.seed)
    examples = generate_synthetic_reviews(cfg)
    write_dataset(examples, args.out)
    _sidecar_manifest("datagen", args, {"synth": asdict(cfg)})
    print(f"wrote {len(examples)} examples to {args.out}")
    return EXIT_OK


def cmd_train_predictor(args) -> int:
    examples, _ = read_dataset(args.data)
    cfg = load_train_config(args.config, args)
    model = train_reference_classifier(examples, cfg)
    model.save(args.out)
    _sidecar_manifest("train-predictor", args, {"train": asdict(cfg)})
    print(f"trained classifier on {len(examples)} examples -> {args.out}")
    return EXIT_OK


def cmd_train_editor(args) -> int:
    examples, _ = read_dataset(args.data)
    cfg = InfillerConfig(add_k=args.add_k, length_jitter=args.jitter)
    model = train_reference_infiller(examples, use_labels=not args.no_labels, cfg=cfg)
    model.save(args.out)
    _sidecar_manifest("train-editor", args, {"infiller": asdict(cfg)})
    mode = "pooled" if args.no_labels else "label-conditioned"
    print(f"trained {mode} infiller on {len(examples)} examples -> {args.out}")
    return EXIT_OK


def cmd_train_fluency(args) -> int:
    examples, _ = read_dataset(args.data)
    scorer = ReferenceNgramScorer.train(examples, add_k=args.add_k)
    scorer.save(args.out)
    _sidecar_manifest("train-fluency", args, {"add_k": args.add_k})
    print(f"trained fluency scorer on {len(examples)} examples -> {args.out}")
    return EXIT_OK


def _edit_with_args(args, examples, cfg) -> tuple[list[EditOutcome], list[InstanceFailure]]:
    predictor = resolve_predictor(args.predictor)
    editor = resolve_editor(args.editor, predictor, cfg)
    return run_edit_batch(
        examples, predictor, editor, cfg,
        strategy=MaskStrategy(args.masker),
        stage2_label=not args.no_stage2_label,
        contrast_label=args.contrast_label,
        attribution_on=args.attribution_on,
        jobs=args.jobs)


def cmd_edit(args) -> int:
    examples, _ = read_dataset(args.data)
    if args.limit:
        examples = examples[: args.limit]
    cfg = load_search_config(args.config, args.seed)
    scorer = resolve_fluency(args.fluency) if args.fluency else None

    os.makedirs(args.output, exist_ok=True)
    started = time.perf_counter()
    outcomes, failures = _edit_with_args(args, examples, cfg)
    elapsed = time.perf_counter() - started

    write_outcomes(outcomes, os.path.join(args.output, "outcomes.jsonl"))
    if failures:
        with open(os.path.join(args.output, "failures.jsonl"), "w", encoding="utf-8") as fh:
            for f in failures:
                fh.write(json.dumps(f.__dict__, sort_keys=True) + "\n")
    report = metrics_from_outcomes(outcomes, failures, scorer)
    report.write(os.path.join(args.output, "metrics.jsonl"),
                 os.path.join(args.output, "summary.json"))
    manifest = RunManifest(
        command="edit", args=_manifest_args(args), seed=cfg.rng_seed,
        backends={"predictor": args.predictor, "editor": args.editor,
                  "fluency": args.fluency},
        config={"search": asdict(cfg)}, timing_s=elapsed,
        counters=_counter_totals(outcomes))
    manifest.write(os.path.join(args.output, "manifest.json"))

    print(f"edited {len(outcomes)}/{len(examples)} instances "
          f"(flip rate {report.flip_rate:.3f}) in {elapsed:.1f}s -> {args.output}")
    backend_failures = [f for f in failures if f.kind == "backend"]
    if backend_failures:
        print(f"{len(backend_failures)} instances failed on backend errors", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def cmd_evaluate(args) -> int:
    outcomes = read_outcomes(args.outcomes)
    scorer = resolve_fluency(args.fluency) if args.fluency else None
    os.makedirs(args.output, exist_ok=True)
    report = metrics_from_outcomes(outcomes, scorer=scorer)
    report.write(os.path.join(args.output, "metrics.jsonl"),
                 os.path.join(args.output, "summary.json"))
    manifest = RunManifest(
        command="evaluate", args=_manifest_args(args),
        seed=args.seed if args.seed is not None else 0,
        backends={"fluency": args.fluency}, config={})
    manifest.write(os.path.join(args.output, "manifest.json"))
    print(json.dumps(report.summary(), indent=2, sort_keys=True))
    return EXIT_OK


ABLATION_CONDITIONS = (
    # (name, stage1 labels, stage2 labels, masker)
    ("label+label", True, True, "gradient"),
    ("label+nolabel", True, False, "gradient"),
    ("nolabel+label", False, True, "gradient"),
    ("nolabel+nolabel", False, False, "gradient"),
    ("label+label/random", True, True, "random"),
)


def cmd_ablate(args) -> int:
    train_examples, _ = read_dataset(args.train_data)
    eval_examples, _ = read_dataset(args.data)
    if args.limit:
        eval_examples = eval_examples[: args.limit]
    cfg = load_search_config(args.config, args.seed)

    predictor = (resolve_predictor(args.predictor) if args.predictor
                 else train_reference_classifier(train_examples,
                                                 TrainConfig(rng_seed=cfg.rng_seed)))
    infillers = {
        True: train_reference_infiller(train_examples, use_labels=True),
        False: train_reference_infiller(train_examples, use_labels=False),
    }
    scorer = ReferenceNgramScorer.train(train_examples)

    os.makedirs(args.output, exist_ok=True)
    started = time.perf_counter()
    table = []
    for name, stage1, stage2, masker in ABLATION_CONDITIONS:
        outcomes, failures = run_edit_batch(
            eval_examples, predictor, infillers[stage1], cfg,
            strategy=MaskStrategy(masker), stage2_label=stage2, jobs=args.jobs)
        report = metrics_from_outcomes(outcomes, failures, scorer)
        summary = report.summary()
        table.append({"condition": name, "stage1_labels": stage1,
                      "stage2_labels": stage2, "masker": masker, **summary})
    elapsed = time.perf_counter() - started

    with open(os.path.join(args.output, "table.json"), "w", encoding="utf-8") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")

    def fmt(value) -> str:
        return f"{value:.3f}" if value is not None else "-"

    lines = ["| condition | masker | flip rate | mean minimality | mean fluency |",
             "|---|---|---|---|---|"]
    for row in table:
        lines.append(
            f"| {row['condition']} | {row['masker']} | {fmt(row['flip_rate'])} "
            f"| {fmt(row['mean_minimality'])} | {fmt(row['mean_fluency'])} |")
    with open(os.path.join(args.output, "table.md"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    manifest = RunManifest(
        command="ablate", args=_manifest_args(args), seed=cfg.rng_seed,
        backends={"predictor": args.predictor or "trained-in-run"},
        config={"search": asdict(cfg)}, timing_s=elapsed)
    manifest.write(os.path.join(args.output, "manifest.json"))
    print("\n".join(lines))
    return EXIT_OK


def cmd_analyze(args) -> int:
    outcomes = read_outcomes(args.outcomes)
    stats = artifact_stats(outcomes, min_count=args.min_count,
                           max_minimality=args.max_minimality, top_n=args.top_n)
    os.makedirs(args.output, exist_ok=True)
    with open(os.path.join(args.output, "artifacts.json"), "w", encoding="utf-8") as fh:
        json.dump(stats.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(args.output, "artifacts.md"), "w", encoding="utf-8") as fh:
        fh.write(stats.to_markdown() + "\n")
    manifest = RunManifest(command="analyze", args=_manifest_args(args), seed=0,
                           backends={}, config={})
    manifest.write(os.path.join(args.output, "manifest.json"))
    print(stats.to_markdown())
    return EXIT_OK


def cmd_stain(args) -> int:
    examples, labels = read_dataset(args.data)
    spec = StainSpec(stained_label=args.label, fraction=args.fraction,
                     phrase=tuple(args.phrase.split()) if args.phrase else
                     StainSpec.__dataclass_fields__["phrase"].default)
    stained, manifest = stain_corpus(examples, spec, np.random.default_rng(args.seed))
    write_dataset(stained, args.out, labels=labels.labels)
    manifest.write(args.out + ".stain-manifest.json")
    _sidecar_manifest("stain", args, {"stain": {"label": args.label,
                                                "fraction": args.fraction}})
    print(f"stained {len(manifest.stained_ids)} of {len(examples)} examples -> {args.out}"
          + (f" (shortfall {manifest.shortfall})" if manifest.shortfall else ""))
    return EXIT_OK


def cmd_rerun(args) -> int:
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    stored = dict(manifest["args"])
    # redirect whichever output flag the original command used
    stored["out" if "out" in stored else "output"] = args.output
    argv = [manifest["command"]]
    for key, value in stored.items():
        if value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        else:
            argv.extend([flag, str(value)])
    return main(argv)


def _add_shared_edit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--predictor", required=True,
                   help="classifier checkpoint path, URL, or 'remote'")
    p.add_argument("--editor", required=True,
                   help="infiller checkpoint path, URL, or 'remote'")
    p.add_argument("--fluency", help="fluency scorer checkpoint path or URL")
    p.add_argument("--contrast-label", help="override second-highest contrast selection")
    p.add_argument("--masker", choices=["gradient", "random"], default="gradient")
    p.add_argument("--no-stage2-label", action="store_true",
                   help="do not pass the contrast label to the editor")
    p.add_argument("--attribution-on", choices=["predicted", "contrast"],
                   default="predicted")
    p.add_argument("--limit", type=int, help="edit only the first N instances")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="contredit",
                     description="Contrastive editing engine: minimal prediction-flipping edits")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--config", help="JSON config file (section 'search')")
        return p

    p = add("datagen", cmd_datagen, "generate a synthetic sentiment dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--rating-prob", type=float, default=0.8)
    p.add_argument("--len-lo", type=int, default=20)
    p.add_argument("--len-hi", type=int, default=36)
    p.set_defaults(seed=0)

    p = add("train-predictor", cmd_train_predictor, "train the reference classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--l2", type=float)

    p = add("train-editor", cmd_train_editor, "train the reference infiller")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-labels", action="store_true",
                   help="pool counts across labels (the no-label ablation)")
    p.add_argument("--add-k", type=float, default=0.1)
    p.add_argument("--jitter", type=int, default=2)

    p = add("train-fluency", cmd_train_fluency, "train the n-gram fluency scorer")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--add-k", type=float, default=0.1)

    p = add("edit", cmd_edit, "find contrastive edits for a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True)
    _add_shared_edit_flags(p)

    p = add("evaluate", cmd_evaluate, "compute metrics from an outcome file")
    p.add_argument("--outcomes", required=True)
    p.add_argument("--fluency")
    p.add_argument("--output", required=True)

    p = add("ablate", cmd_ablate, "run the label/masker ablation grid")
    p.add_argument("--data", required=True, help="evaluation instances")
    p.add_argument("--train-data", required=True, help="data for fitting backends")
    p.add_argument("--predictor", help="optional pre-trained classifier checkpoint")
    p.add_argument("--output", required=True)
    p.add_argument("--limit", type=int)

    p = add("analyze", cmd_analyze, "mine artifact tokens from an outcome file")
    p.add_argument("--outcomes", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--min-count", type=int, default=10)
    p.add_argument("--max-minimality", type=float, default=0.05)
    p.add_argument("--top-n", type=int, default=5)

    p = add("stain", cmd_stain, "plant a phrase-label correlation in a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--fraction", type=float, default=0.10)
    p.add_argument("--phrase", help="stain phrase (default: the shipped marker phrase)")
    p.set_defaults(seed=0)

    p = add("rerun", cmd_rerun, "re-execute a run from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output", required=True)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (BackendError, ProtocolError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (OSError, ValueError, KeyError, EngineError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
