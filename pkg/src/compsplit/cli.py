"""Command-line front end: ingest -> split -> report -> baseline -> evaluate.

Every command writes a manifest.json next to its outputs recording the
resolved configuration, seed and input digests, so a run can be replayed
byte-for-byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .corpus import (
    corpus_stats,
    extract_instances,
    load_vocab,
    parse_annotations,
    read_instances_jsonl,
    write_instances_jsonl,
)
from .divergence import divergences_between
from .errors import CompsplitError, CoverageError
from .evalkit import (
    EvalRecord,
    evaluate_records,
    memorizer_fit,
    memorizer_predict,
    mrh_predict,
    mrh_predict_text,
    render_prompt,
    select_fewshot,
)
from .splitter import (
    SplitConfig,
    generate_mcd_split,
    generate_random_split,
    strict_filter,
    verify_constraints,
)
from .synth import generate_planted_corpus

EXIT_OK = 0
EXIT_CONSTRAINTS = 1
EXIT_INPUT = 2


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, seed, inputs: dict) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "input_digests": {name: _digest(p) for name, p in inputs.items()},
        "tool_version": __version__,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _default_seed(value) -> int:
    if value is not None:
        return int(value)
    return int(os.environ.get("DIVSPLIT_SEED", "0"))


def _load_splits(splits_dir) -> dict:
    splits_dir = Path(splits_dir)
    out = {}
    for name in ("train", "val", "test"):
        path = splits_dir / f"{name}.jsonl"
        if not path.exists():
            raise CompsplitError(f"missing split file: {path}")
        out[name] = read_instances_jsonl(path)
    return out


def cmd_ingest(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab = load_vocab(args.vocab)
    by_video = parse_annotations(args.annotations, format=args.format, vocab=vocab)
    result = extract_instances(
        by_video,
        window=args.window,
        dedup=not args.no_dedup,
        noun_filter=not args.no_noun_filter,
        compounds_scope=args.compounds,
    )
    write_instances_jsonl(result.instances, out_dir / "corpus.jsonl")
    report = result.report()
    report["stats"] = corpus_stats(result.instances) if result.instances else {}
    with open(out_dir / "ingest_report.json", "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    _write_manifest(
        out_dir,
        "ingest",
        {
            "window": args.window,
            "dedup": not args.no_dedup,
            "noun_filter": not args.no_noun_filter,
            "compounds": args.compounds,
        },
        None,
        {"annotations": args.annotations, "vocab": args.vocab},
    )
    print(f"ingested {report['final_count']} instances "
          f"({report['raw_window_count']} raw windows)")
    return EXIT_OK


def cmd_split(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    instances = read_instances_jsonl(args.corpus)
    seed = _default_seed(args.seed)
    assignment = None
    used_seed = seed
    for attempt in range(args.retries + 1):
        used_seed = seed + attempt
        config = SplitConfig(
            atom_threshold=args.atom_threshold,
            compound_threshold=args.compound_threshold,
            train_fraction=args.train_fraction,
            seed=used_seed,
            mode=args.mode,
            val_fraction_of_heldout=args.val_fraction,
            strict_target_disjoint=args.strict,
            candidate_sample=args.candidate_sample,
        )
        if args.mode == "mcd":
            assignment = generate_mcd_split(instances, config)
        else:
            assignment = generate_random_split(instances, config)
        if assignment.constraints_met or args.mode == "random":
            break
    verification = verify_constraints(assignment, instances, config)
    by_id = {inst.id: inst for inst in instances}
    for name, ids in (("train", assignment.train), ("val", assignment.val), ("test", assignment.test)):
        write_instances_jsonl([by_id[i] for i in ids], out_dir / f"{name}.jsonl")
    # With --strict the delivered eval sets shrink, so d_a/d_c describe the
    # filtered split while constraints_met reflects the generated one.
    report = {
        "d_a": round(verification["d_a"], 6),
        "d_c": round(verification["d_c"], 6),
        "constraints_met": assignment.constraints_met,
        "target_compound_overlap_count": verification["target_compound_overlap_count"],
        "sizes": {
            "train": len(assignment.train),
            "val": len(assignment.val),
            "test": len(assignment.test),
        },
        "seed": used_seed,
        "mode": args.mode,
        "config": config.as_dict(),
        "dropped_ids": assignment.dropped_ids,
    }
    with open(out_dir / "report.json", "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    _write_manifest(out_dir, "split", config.as_dict(), used_seed, {"corpus": args.corpus})
    print(
        f"mode={args.mode} seed={used_seed} "
        f"d_a={report['d_a']:.6f} d_c={report['d_c']:.6f} "
        f"constraints_met={report['constraints_met']}"
    )
    if args.mode == "random" or assignment.constraints_met:
        return EXIT_OK
    return EXIT_CONSTRAINTS


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = _load_splits(args.splits)
    per_split_atoms = {name: Counter() for name in splits}
    per_split_compounds = {name: Counter() for name in splits}
    for name, instances in splits.items():
        for inst in instances:
            per_split_atoms[name].update(inst.atoms)
            per_split_compounds[name].update(inst.compounds)

    def write_dist(path, counters, key_fn):
        keys = set()
        for c in counters.values():
            keys.update(c)
        rows = sorted(keys, key=lambda k: (-counters["train"][k], key_fn(k)))
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["key", "train", "val", "test"])
            for k in rows:
                writer.writerow([key_fn(k)] + [counters[n][k] for n in ("train", "val", "test")])

    write_dist(out_dir / "atom_dist.csv", per_split_atoms, str)
    write_dist(
        out_dir / "compound_dist.csv",
        per_split_compounds,
        lambda k: f"{k[0]},{k[1]}",
    )
    div = divergences_between(splits["train"], splits["val"] + splits["test"])
    summary = {
        "sizes": {name: len(instances) for name, instances in splits.items()},
        "divergences": div.as_dict(),
        "stats": {name: corpus_stats(insts) if insts else {} for name, insts in splits.items()},
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
    _write_manifest(
        out_dir,
        "report",
        {},
        None,
        {name: Path(args.splits) / f"{name}.jsonl" for name in splits},
    )
    return EXIT_OK


def _reference_record(inst, prediction: str, task: str) -> EvalRecord:
    if task == "verb":
        reference = inst.target.verb.surface
    elif task == "noun":
        reference = inst.target.primary_noun.surface
    else:
        reference = inst.target.raw_text
    return EvalRecord(
        instance_id=inst.id,
        prediction_text=prediction,
        reference_text=reference,
        ref_verb=inst.target.verb,
        ref_noun=inst.target.primary_noun,
    )


def cmd_evaluate(args) -> int:
    splits = _load_splits(args.splits)
    vocab = load_vocab(args.vocab)
    if args.split_name == "heldout":
        references = splits["val"] + splits["test"]
    else:
        references = splits[args.split_name]
    predictions = {}
    with open(args.predictions, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                row = json.loads(line)
                predictions[row["instance_id"]] = str(row["prediction"])
    known = {inst.id for inst in references}
    unknown = sorted(set(predictions) - known)
    if unknown:
        raise CoverageError(f"predictions for unknown instance ids: {unknown[:10]}")
    missing = 0
    records = []
    for inst in references:
        pred = predictions.get(inst.id)
        if pred is None:
            missing += 1
            pred = ""
        records.append(_reference_record(inst, pred, args.task))
    report = evaluate_records(records, vocab, task=args.task)
    report["missing_predictions"] = missing
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    print(json.dumps({k: report[k] for k in ("bleu1", "em", "ca", "n")}))
    return EXIT_OK


def cmd_baseline(args) -> int:
    splits = _load_splits(args.splits)
    if args.split_name == "heldout":
        targets = splits["val"] + splits["test"]
    else:
        targets = splits[args.split_name]
    model = None
    if args.which == "memorizer":
        model = memorizer_fit(splits["train"])
    rows = []
    for inst in targets:
        if args.which == "mrh":
            if args.task == "nup":
                pred = mrh_predict_text(inst)
            else:
                pred = mrh_predict(inst, args.task).surface
        else:
            text = memorizer_predict(model, inst)
            if args.task == "verb":
                pred = text.split()[0]
            elif args.task == "noun":
                pred = " ".join(text.split()[1:])
            else:
                pred = text
        rows.append({"instance_id": inst.id, "prediction": pred})
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    print(f"wrote {len(rows)} predictions to {out_path}")
    return EXIT_OK


def cmd_prompt(args) -> int:
    splits = _load_splits(args.splits)
    pool = splits["train"]
    query = None
    for insts in splits.values():
        for inst in insts:
            if inst.id == args.query_id:
                query = inst
    if query is None:
        raise CoverageError(f"query id not found in splits: {args.query_id}")
    shots = select_fewshot(query, pool, args.k)
    text = render_prompt(query, shots, template=args.template)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as f:
        f.write(text + "\n")
    return EXIT_OK


def cmd_synth(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = _default_seed(args.seed)
    instances, vocab = generate_planted_corpus(
        n_instances=args.n, n_verbs=args.verbs, n_nouns=args.nouns, seed=seed
    )
    write_instances_jsonl(instances, out_dir / "corpus.jsonl")
    vocab_doc = {
        "verbs": vocab.verb_classes,
        "nouns": vocab.noun_classes,
        "verb_categories": {str(k): v for k, v in vocab.verb_categories.items()},
        "noun_categories": {str(k): v for k, v in vocab.noun_categories.items()},
    }
    with open(out_dir / "vocab.json", "w", encoding="utf-8") as f:
        json.dump(vocab_doc, f, indent=2)
        f.write("\n")
    _write_manifest(
        out_dir,
        "synth",
        {"n": args.n, "verbs": args.verbs, "nouns": args.nouns},
        seed,
        {},
    )
    print(f"wrote {len(instances)} synthetic instances to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="compsplit",
        description="Compositional split generation and evaluation toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse annotations and extract instances")
    p.add_argument("--annotations", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--format", choices=["csv", "jsonl"], default=None)
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--no-dedup", action="store_true")
    p.add_argument("--no-noun-filter", action="store_true")
    p.add_argument("--compounds", choices=["all", "target-only"], default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="generate train/val/test splits")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=["mcd", "random"], default="mcd")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--atom-threshold", type=float, default=0.02)
    p.add_argument("--compound-threshold", type=float, default=0.6)
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--val-fraction", type=float, default=0.5)
    p.add_argument("--retries", type=int, default=0)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--candidate-sample", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("report", help="export plot-ready split distributions")
    p.add_argument("--splits", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("evaluate", help="score a predictions file against a split")
    p.add_argument("--predictions", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--task", choices=["nup", "verb", "noun"], default="nup")
    p.add_argument("--split-name", choices=["val", "test", "heldout"], default="test")
    p.add_argument("--out", default="metrics.json")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="generate heuristic baseline predictions")
    p.add_argument("--splits", required=True)
    p.add_argument("--which", choices=["mrh", "memorizer"], required=True)
    p.add_argument("--task", choices=["nup", "verb", "noun"], default="nup")
    p.add_argument("--split-name", choices=["val", "test", "heldout"], default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("prompt", help="render a k-shot prompt for one query instance")
    p.add_argument("--splits", required=True)
    p.add_argument("--query-id", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--template", choices=["text", "interleaved"], default="text")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("synth", help=argparse.SUPPRESS)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--verbs", type=int, default=8)
    p.add_argument("--nouns", type=int, default=6)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "template", None) == "text":
        args.template = "text-only"
    try:
        return args.func(args)
    except (CompsplitError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
