"""Command line entry points: train, eval, infer, inspect, graph-stats.

Every command writes ``manifest.json`` (config snapshot, seed, package
version, command line) into its output directory so the run can be
reproduced bit-for-bit. ``GRAPHTALK_DATA_ROOT`` may hold a directory
that relative dataset paths are resolved against.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .data import (Dialogue, Ontology, build_vocab, derive_ontology,
                   entity_lexicon, extract_entities, load_dataset,
                   load_ontology, make_examples)
from .dialog_graph import build_graph, edge_distance_distribution
from .errors import DataError, GraphTalkError
from .metrics import EvalReport, corpus_bleu, entity_f1, per_domain_f1
from .model import DialogueModel
from .training import train_model
from .vocab import EntityVocabulary
from .smd import load_smd_ontology

__all__ = ["main"]


def _resolve_path(path: str) -> Path:
    p = Path(path)
    root = os.environ.get("GRAPHTALK_DATA_ROOT")
    if root and not p.is_absolute() and not p.exists():
        candidate = Path(root) / p
        if candidate.exists():
            return candidate
    return p


def _load_corpus(dataset: str, fmt: str, split: str, ontology_path: str | None
                 ) -> tuple[list[Dialogue], Ontology | None]:
    path = _resolve_path(dataset)
    if ontology_path is not None:
        ontology = load_ontology(_resolve_path(ontology_path))
    elif fmt == "smd":
        ontology = load_smd_ontology(path)
    elif fmt == "multiwoz":
        from .multiwoz import load_multiwoz_ontology
        ontology = load_multiwoz_ontology(path)
    else:
        ontology = None
    dialogues = load_dataset(path, fmt, split)
    return dialogues, ontology


def _write_manifest(outdir: Path, command: str, config: RunConfig | None, args: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "package_version": __version__,
        "config": config.to_dict() if config else None,
        "seed": config.seed if config else None,
        "args": {k: v for k, v in sorted(args.items())
                 if v is not None and isinstance(v, (str, int, float, bool))},
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _config_from_args(args) -> RunConfig:
    overrides = {
        "dataset": args.dataset,
        "dataset_format": args.dataset_format,
        "ontology": args.ontology,
        "seed": args.seed,
        "hops": args.hops,
        "hidden_size": args.hidden,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "k_max": args.k_max,
        "dropout": args.dropout,
    }
    if args.config:
        return load_config(_resolve_path(args.config), overrides)
    clean = {k: v for k, v in overrides.items() if v is not None}
    return RunConfig.from_dict(clean)


def _decode_corpus(model: DialogueModel, examples) -> tuple[list, list, float]:
    """Greedy decode every example; returns (surface responses, steps, copy-failure rate)."""
    responses = []
    all_steps = []
    tag_steps = 0
    failed = 0
    for ex in examples:
        steps = model.decode_example(ex)
        responses.append([s.surface_token for s in steps])
        all_steps.append(steps)
        for s in steps:
            if model.vocab.is_tag_id(s.sketch_id):
                tag_steps += 1
                failed += int(s.copy_failed)
    rate = failed / tag_steps if tag_steps else 0.0
    return responses, all_steps, rate


def _build_report(model: DialogueModel, dialogues, ontology, examples,
                  responses, copy_failure_rate) -> EvalReport:
    lexicon = entity_lexicon(dialogues, ontology)
    hyp_entities = [extract_entities(r, lexicon) for r in responses]
    gold_entities = [extract_entities(ex.gold_response, lexicon) for ex in examples]
    domains = [ex.domain for ex in examples]
    dup = sum(1 for ents in hyp_entities if any(c > 1 for c in Counter(ents).values()))
    return EvalReport(
        bleu=corpus_bleu(responses, [ex.gold_response for ex in examples]),
        entity_f1=entity_f1(hyp_entities, gold_entities),
        per_domain=per_domain_f1(hyp_entities, gold_entities, domains),
        copy_failure_rate=copy_failure_rate,
        duplicate_entity_rate=dup / len(responses) if responses else 0.0,
    )


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    config = _config_from_args(args)
    if not config.dataset:
        raise DataError("train needs --dataset (or a config with one)")
    dialogues, ontology = _load_corpus(config.dataset, config.dataset_format,
                                       args.split, config.ontology or None)
    if ontology is None:
        ontology = derive_ontology(dialogues)
    dev = None
    if args.dev:
        dev_dialogues, _ = _load_corpus(args.dev, config.dataset_format, "dev",
                                        config.ontology or None)
        dev = dev_dialogues

    examples = make_examples(dialogues, ontology)
    if not examples:
        raise DataError("no system turns in the training corpus")
    vocab = build_vocab(examples, ontology)
    ent_tokens = [t for d in dialogues for tr in d.kb for t in (tr[0], tr[2])]
    for values in ontology.types.values():
        ent_tokens.extend(values)
    entity_vocab = EntityVocabulary(ent_tokens)
    model = DialogueModel(config, vocab, entity_vocab)

    outdir = Path(args.out)
    _write_manifest(outdir, "train", config, vars(args))
    dev_examples = make_examples(dev, ontology) if dev else None

    log_path = outdir / "train_log.jsonl"
    with log_path.open("w") as log_fh:
        def log_fn(entry):
            log_fh.write(json.dumps(entry) + "\n")
            log_fh.flush()
            msg = f"epoch {entry['epoch']:>4}  loss {entry['train_loss']:.4f}"
            if "val_bleu" in entry:
                msg += f"  val BLEU {entry['val_bleu']:.2f}"
            print(msg)

        result = train_model(model, examples, dev_examples=dev_examples, log_fn=log_fn)

    save_checkpoint(outdir / "checkpoint.bin", model, ontology,
                    param_arrays=result.best_params)
    print(f"saved checkpoint to {outdir / 'checkpoint.bin'}"
          + (f" (best epoch {result.best_epoch})" if dev_examples else ""))
    return 0


def _load_for_eval(args) -> tuple[DialogueModel, Ontology, list, list]:
    model, ontology = load_checkpoint(_resolve_path(args.checkpoint))
    fmt = args.dataset_format or model.config.dataset_format
    dialogues, file_ontology = _load_corpus(args.dataset, fmt, args.split, args.ontology)
    if file_ontology is not None:
        ontology = file_ontology
    examples = make_examples(dialogues, ontology)
    if not examples:
        raise DataError("no system turns in the evaluation corpus")
    return model, ontology, dialogues, examples


def cmd_eval(args) -> int:
    model, ontology, dialogues, examples = _load_for_eval(args)
    responses, _, copy_rate = _decode_corpus(model, examples)
    report = _build_report(model, dialogues, ontology, examples, responses, copy_rate)
    outdir = Path(args.out)
    _write_manifest(outdir, "eval", model.config, vars(args))
    (outdir / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    (outdir / "report.txt").write_text(report.summary() + "\n")
    print(report.summary())
    return 0


def cmd_infer(args) -> int:
    model, ontology, dialogues, examples = _load_for_eval(args)
    outdir = Path(args.out)
    _write_manifest(outdir, "infer", model.config, vars(args))
    out_path = outdir / "outputs.jsonl"
    with out_path.open("w") as fh:
        for ex in examples:
            sketch, surface, steps = model.respond(ex)
            fh.write(json.dumps({
                "dialogue_id": ex.dialogue_id,
                "turn_index": ex.turn_index,
                "domain": ex.domain,
                "sketch": sketch,
                "response": surface,
                "gold_response": ex.gold_response,
                "steps": [{
                    "token": s.surface_token,
                    "sketch_token": s.sketch_token,
                    "copied_node": s.copied_node,
                    "copy_failed": s.copy_failed,
                    "node_weights": None if s.node_dist is None else
                                    [float(w) for w in s.node_dist],
                } for s in steps],
            }) + "\n")
    print(f"wrote {out_path}")
    return 0


def cmd_inspect(args) -> int:
    model, ontology, dialogues, examples = _load_for_eval(args)
    matching = [ex for ex in examples if ex.dialogue_id == args.dialogue_id]
    if not matching:
        raise DataError(f"dialogue id {args.dialogue_id!r} not found")
    lines = []
    for ex in matching:
        lines.append(f"dialogue {ex.dialogue_id} turn {ex.turn_index}")
        for step in model.inspect(ex):
            tag = "tag" if step["is_tag"] else "   "
            copied = step["copied_node"]
            copied_s = "-" if copied is None else f"node {copied}"
            lines.append(f"  step {step['step']:>2} {tag} "
                         f"{step['sketch_token']:<16} -> {step['token']:<20} {copied_s}")
            if step["node_weights"]:
                for w in sorted(step["node_weights"], key=lambda x: -x["weight"])[:5]:
                    lines.append(f"        {w['weight']:.4f}  {w['token']} (node {w['node']})")
    text = "\n".join(lines)
    print(text)
    if args.out:
        outdir = Path(args.out)
        _write_manifest(outdir, "inspect", model.config, vars(args))
        (outdir / "attention.txt").write_text(text + "\n")
    return 0


def cmd_graph_stats(args) -> int:
    fmt = args.dataset_format or "jsonl"
    dialogues, _ = _load_corpus(args.dataset, fmt, args.split, None)
    graphs = []
    from .dialog_graph import TokenSeq
    for d in dialogues:
        for t in d.turns:
            graphs.append(build_graph(TokenSeq(t.tokens), t.deps,
                                      sequential_only=args.sequential_only))
    dist = edge_distance_distribution(graphs)
    for bucket in ("1", "2-9", "10-14", "15+"):
        print(f"distance {bucket:>5}: {dist[bucket]:6.2f}%")
    if args.out:
        outdir = Path(args.out)
        _write_manifest(outdir, "graph-stats", None, vars(args))
        (outdir / "edge_distances.json").write_text(json.dumps(dist, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# argument plumbing


def _add_data_args(p: argparse.ArgumentParser, need_dataset: bool = True) -> None:
    p.add_argument("--dataset", required=need_dataset,
                   help="corpus file (jsonl) or dataset root directory (smd/multiwoz)")
    p.add_argument("--dataset-format", dest="dataset_format",
                   choices=["jsonl", "smd", "multiwoz"], default=None)
    p.add_argument("--split", default="train", help="dataset split: train/dev/test")
    p.add_argument("--ontology", default=None, help="ontology JSON path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphtalk",
        description="Graph-encoder dialogue model: train, evaluate, inspect.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and save the best checkpoint")
    p.add_argument("--config", default=None, help="JSON config file")
    _add_data_args(p, need_dataset=False)
    p.add_argument("--dev", default=None, help="validation corpus for BLEU selection")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hops", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--k-max", dest="k_max", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.set_defaults(func=cmd_train)

    for name, fn, hlp in [("eval", cmd_eval, "decode a split and report metrics"),
                          ("infer", cmd_infer, "decode a split and dump responses"),
                          ("inspect", cmd_inspect, "attention dump for one dialogue")]:
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--checkpoint", required=True)
        _add_data_args(p)
        if name == "inspect":
            p.add_argument("--dialogue-id", dest="dialogue_id", required=True)
            p.add_argument("--out", default=None)
        else:
            p.add_argument("--out", required=True)
        p.set_defaults(func=fn)

    p = sub.add_parser("graph-stats", help="edge path distance distribution")
    _add_data_args(p)
    p.add_argument("--sequential-only", dest="sequential_only", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_graph_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GraphTalkError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
