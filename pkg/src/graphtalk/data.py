"""Corpus loading, delexicalization, vocabulary building and batching.

The canonical corpus format is JSON lines, one dialogue per line:

    {"id": "d42", "domain": "navigate", "subject_type": "poi",
     "turns": [{"speaker": "user",   "tokens": ["where", ...],
                "deps": [[1, 3, "nsubj"], ...]},
               {"speaker": "system", "tokens": ["palo_alto_garage", ...],
                "deps": [...]}],
     "kb": [["palo_alto_garage", "distance", "1_miles"], ...]}

``deps`` holds (head, dependent, label) index triples local to the
turn's tokens; ``kb`` holds (subject, relation, object) string triples.
One training example is cut per system turn: the input is the token
concatenation of all earlier turns (each prefixed with a speaker
marker, dependency edges kept within their own utterance), the target
is the system utterance delexicalized into a sketch.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dialog_graph import DepEdge, TokenSeq
from .errors import DataError
from .kgraph import KnowledgeGraph, build_kb_graph
from .vocab import SketchVocabulary

USER_MARK, SYSTEM_MARK = "<usr>", "<sys>"

__all__ = [
    "Turn",
    "Dialogue",
    "Ontology",
    "TrainingExample",
    "Batch",
    "normalize_token",
    "load_dataset",
    "load_jsonl_dataset",
    "load_ontology",
    "derive_ontology",
    "delexicalize",
    "relexicalize",
    "make_examples",
    "build_vocab",
    "make_batches",
    "entity_lexicon",
    "extract_entities",
]


def normalize_token(token: str) -> str:
    """Canonical entity/word form: lowercase, spaces to underscores."""
    return re.sub(r"\s+", "_", str(token).strip().lower())


@dataclass
class Turn:
    speaker: str  # "user" | "system"
    tokens: list[str]
    deps: list[DepEdge] = field(default_factory=list)


@dataclass
class Dialogue:
    dialogue_id: str
    domain: str
    turns: list[Turn]
    kb: list[tuple[str, str, str]]
    subject_type: str = "entity"


@dataclass
class Ontology:
    """Slot types with value pools and the value -> type lookup."""

    types: dict[str, set[str]]
    value_to_type: dict[str, str]

    @property
    def tags(self) -> set[str]:
        return {f"@{t}" for t in sorted(self.types)}

    def type_of(self, token: str) -> str | None:
        return self.value_to_type.get(token)


@dataclass
class TrainingExample:
    """One prediction target: history graph input plus sketch supervision."""

    dialogue_id: str
    turn_index: int
    domain: str
    tokens: TokenSeq
    deps: list[DepEdge]
    kb: list[tuple[str, str, str]]
    graph: KnowledgeGraph
    sketch: list[str]
    graph_labels: list[int | None]
    gold_response: list[str]

    def __post_init__(self):
        if len(self.graph_labels) != len(self.sketch):
            raise DataError("one graph label slot per sketch token required")


@dataclass
class Batch:
    """Examples plus the padded sketch-target block and its mask."""

    examples: list[TrainingExample]
    target_ids: np.ndarray    # (B, T) int, includes the end marker, pad elsewhere
    target_mask: np.ndarray   # (B, T) bool, True on real steps
    graph_labels: list[list[int | None]]  # per example, aligned with real steps


# ---------------------------------------------------------------------------
# loading


def _dep_edges(raw, n_tokens: int, where: str) -> list[DepEdge]:
    edges = []
    for k, item in enumerate(raw or []):
        if len(item) != 3:
            raise DataError(f"{where}: dep edge {k} must be [head, dependent, label]")
        h, d, label = int(item[0]), int(item[1]), str(item[2])
        if h == d or not (0 <= h < n_tokens) or not (0 <= d < n_tokens):
            raise DataError(f"{where}: dep edge {k} invalid: ({h}, {d}) for {n_tokens} tokens")
        edges.append(DepEdge(h, d, label))
    return edges


def load_jsonl_dataset(path: str | Path) -> list[Dialogue]:
    """Read the canonical JSON-lines corpus; empty file gives an empty list."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    dialogues: list[Dialogue] = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: invalid JSON ({e})")
            try:
                turns = []
                for t in rec["turns"]:
                    tokens = [normalize_token(w) for w in t["tokens"]]
                    if not tokens:
                        raise DataError(f"{path}:{lineno}: empty turn")
                    turns.append(Turn(
                        speaker=str(t["speaker"]),
                        tokens=tokens,
                        deps=_dep_edges(t.get("deps"), len(tokens), f"{path}:{lineno}"),
                    ))
                kb = [tuple(normalize_token(x) for x in triple) for triple in rec.get("kb", [])]
                for k, triple in enumerate(kb):
                    if len(triple) != 3:
                        raise DataError(f"{path}:{lineno}: kb record {k} is not a triple")
                dialogues.append(Dialogue(
                    dialogue_id=str(rec.get("id", f"dlg{lineno}")),
                    domain=str(rec.get("domain", "default")),
                    turns=turns,
                    kb=kb,
                    subject_type=str(rec.get("subject_type", "entity")),
                ))
            except KeyError as e:
                raise DataError(f"{path}:{lineno}: missing field {e}")
    return dialogues


def load_dataset(path: str | Path, fmt: str = "jsonl", split: str = "train") -> list[Dialogue]:
    if fmt == "jsonl":
        return load_jsonl_dataset(path)
    if fmt == "smd":
        from .smd import load_smd_split
        return load_smd_split(path, split)
    if fmt == "multiwoz":
        from .multiwoz import load_multiwoz_split
        return load_multiwoz_split(path, split)
    raise DataError(f"unknown dataset format: {fmt!r}")


def load_ontology(path: str | Path) -> Ontology:
    """Read a JSON object mapping slot type -> list of example values."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"ontology file not found: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"ontology file {path} is not valid JSON: {e}")
    types: dict[str, set[str]] = {}
    for slot, values in raw.items():
        types[str(slot)] = {normalize_token(v) for v in values}
    return _finish_ontology(types)


def derive_ontology(dialogues: list[Dialogue]) -> Ontology:
    """Fallback ontology straight from the KBs: relations type the objects,
    the dialogue's subject_type types the subjects."""
    types: dict[str, set[str]] = {}
    for d in dialogues:
        for subj, rel, obj in d.kb:
            types.setdefault(rel, set()).add(obj)
            types.setdefault(d.subject_type, set()).add(subj)
    return _finish_ontology(types)


def _finish_ontology(types: dict[str, set[str]]) -> Ontology:
    value_to_type: dict[str, str] = {}
    for slot in sorted(types):
        for v in types[slot]:
            value_to_type.setdefault(v, slot)
    return Ontology(types=types, value_to_type=value_to_type)


# ---------------------------------------------------------------------------
# delexicalization


def _row_entities(graph: KnowledgeGraph, row: str) -> set[str]:
    out = {row}
    for n in graph.nodes:
        if n.row == row:
            out.add(n.token)
    return out


def delexicalize(response: list[str], graph: KnowledgeGraph, ontology: Ontology
                 ) -> tuple[list[str], list[int | None]]:
    """Replace entity tokens with @slot tags and point labels at KB nodes.

    A token matching a node of this dialogue's graph gets that node's
    tag and id; when several nodes share the surface form, the one whose
    KB row covers the most other response tokens wins (ties to the
    lowest node id). A token known only to the ontology is tagged with a
    null label. Everything else passes through unchanged.
    """
    response = [normalize_token(t) for t in response]
    response_set = Counter(response)
    sketch: list[str] = []
    labels: list[int | None] = []
    for token in response:
        candidates = graph.nodes_with_token(token)
        if candidates:
            def support(node):
                row = node.token if node.is_subject else node.row
                others = _row_entities(graph, row) - {token}
                return sum(response_set[e] for e in others)
            best = max(candidates, key=lambda n: (support(n), -n.node_id))
            sketch.append(f"@{best.slot}")
            labels.append(best.node_id)
            continue
        slot = ontology.type_of(token)
        if slot is not None:
            sketch.append(f"@{slot}")
            labels.append(None)
            continue
        sketch.append(token)
        labels.append(None)
    return sketch, labels


def relexicalize(sketch: list[str], labels: list[int | None],
                 graph: KnowledgeGraph) -> list[str]:
    """Fill labeled tags back with their node's surface form.

    Tags with a null label stay as-is (their surface form was never
    KB-resolvable and is not recoverable).
    """
    out = []
    for token, label in zip(sketch, labels):
        if label is not None:
            out.append(graph.nodes[label].token)
        else:
            out.append(token)
    return out


# ---------------------------------------------------------------------------
# examples, vocab, batches


def make_examples(dialogues: list[Dialogue], ontology: Ontology) -> list[TrainingExample]:
    """One example per system turn, with the full earlier history as input."""
    examples: list[TrainingExample] = []
    for d in dialogues:
        subject_slots = {subj: ontology.type_of(subj) or d.subject_type
                         for subj, _, _ in d.kb}
        graph = build_kb_graph(d.kb, subject_slots)
        for j, turn in enumerate(d.turns):
            if turn.speaker != "system" or j == 0:
                continue
            tokens: list[str] = []
            speakers: list[str] = []
            turn_ids: list[int] = []
            deps: list[DepEdge] = []
            for i, prev in enumerate(d.turns[:j]):
                mark = USER_MARK if prev.speaker == "user" else SYSTEM_MARK
                offset = len(tokens) + 1    # +1 for the marker token
                tokens.append(mark)
                tokens.extend(prev.tokens)
                speakers.extend([prev.speaker] * (len(prev.tokens) + 1))
                turn_ids.extend([i] * (len(prev.tokens) + 1))
                deps.extend(DepEdge(e.head + offset, e.dependent + offset, e.label)
                            for e in prev.deps)
            sketch, labels = delexicalize(turn.tokens, graph, ontology)
            examples.append(TrainingExample(
                dialogue_id=d.dialogue_id,
                turn_index=j,
                domain=d.domain,
                tokens=TokenSeq(tokens, speakers, turn_ids),
                deps=deps,
                kb=d.kb,
                graph=graph,
                sketch=sketch,
                graph_labels=labels,
                gold_response=list(turn.tokens),
            ))
    return examples


def build_vocab(examples: list[TrainingExample], ontology: Ontology) -> SketchVocabulary:
    """Vocabulary over history tokens, sketch tokens and all ontology tags."""
    streams = [ex.tokens.tokens for ex in examples] + [ex.sketch for ex in examples]
    return SketchVocabulary.build(streams, ontology.tags)


def make_batches(examples: list[TrainingExample], batch_size: int, seed: int,
                 vocab: SketchVocabulary) -> list[Batch]:
    """Seed-shuffled batches with per-batch padded target blocks."""
    if batch_size < 1:
        raise DataError("batch_size must be >= 1")
    order = np.random.default_rng(seed).permutation(len(examples))
    batches: list[Batch] = []
    for start in range(0, len(order), batch_size):
        chunk = [examples[i] for i in order[start:start + batch_size]]
        width = max(len(ex.sketch) + 1 for ex in chunk)  # +1 for the end marker
        ids = np.full((len(chunk), width), vocab.pad_id, dtype=np.int64)
        mask = np.zeros((len(chunk), width), dtype=bool)
        labels: list[list[int | None]] = []
        for r, ex in enumerate(chunk):
            seq = vocab.encode_all(ex.sketch) + [vocab.eos_id]
            ids[r, :len(seq)] = seq
            mask[r, :len(seq)] = True
            labels.append(list(ex.graph_labels) + [None])
        batches.append(Batch(examples=chunk, target_ids=ids, target_mask=mask,
                             graph_labels=labels))
    return batches


# ---------------------------------------------------------------------------
# entity bookkeeping for metrics


def entity_lexicon(dialogues: list[Dialogue], ontology: Ontology) -> set[str]:
    """All KB surface forms plus all ontology values."""
    lex: set[str] = set()
    for d in dialogues:
        for subj, _, obj in d.kb:
            lex.add(subj)
            lex.add(obj)
    for values in ontology.types.values():
        lex.update(values)
    return lex


def extract_entities(tokens: list[str], lexicon: set[str]) -> list[str]:
    """Multiset of lexicon hits in a token sequence (normalized)."""
    return [t for t in (normalize_token(x) for x in tokens) if t in lexicon]
