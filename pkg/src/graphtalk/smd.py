"""Loader for the Stanford multi-domain (kvret) dialogue files.

Reads the original ``kvret_{train,dev,test}_public.json`` format:
dialogues alternate ``driver``/``assistant`` turns, and the scenario
carries a wide-table KB (``items`` rows under ``column_names``) plus an
intent. Rows normalize to (subject, relation, object) triples with the
intent's primary column as subject (navigate: poi, schedule: event,
weather: location). Missing cells ("-" or empty) are skipped.

Utterances are lowercased, punctuation-split, and multi-word entity
mentions are joined with underscores using the entity lexicon (global
kvret entities plus the dialogue's own KB cells), longest match first.

Dependency edges are not part of kvret; when a sidecar file
``<corpus>.deps.jsonl`` exists next to the corpus (one JSON line per
dialogue: {"uuid": ..., "turns": [[[head, dep, label], ...], ...]}
with indices into the tokenized turns), its edges are attached.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from .data import Dialogue, Ontology, Turn, _dep_edges, _finish_ontology, normalize_token
from .errors import DataError

SUBJECT_COLUMNS = {"navigate": "poi", "schedule": "event", "weather": "location"}
SPLIT_FILES = {"train": "kvret_train_public.json",
               "dev": "kvret_dev_public.json",
               "val": "kvret_dev_public.json",
               "test": "kvret_test_public.json"}
ENTITIES_FILE = "kvret_entities.json"

__all__ = ["load_smd_file", "load_smd_split", "load_smd_ontology", "tokenize_utterance"]

_PUNCT = re.compile(r"([.,!?;:])")


def tokenize_utterance(text: str) -> list[str]:
    """Lowercase, split punctuation off, whitespace-tokenize."""
    return _PUNCT.sub(r" \1 ", str(text).lower()).split()


def _canonicalize_entities(tokens: list[str], phrases: dict[tuple[str, ...], str]) -> list[str]:
    """Join multi-word entity mentions into their underscore form (longest first)."""
    if not phrases:
        return tokens
    max_len = max(len(p) for p in phrases)
    out: list[str] = []
    i = 0
    while i < len(tokens):
        matched = False
        for ln in range(min(max_len, len(tokens) - i), 1, -1):
            key = tuple(tokens[i:i + ln])
            if key in phrases:
                out.append(phrases[key])
                i += ln
                matched = True
                break
        if not matched:
            out.append(tokens[i])
            i += 1
    return out


def _phrase_table(values: set[str]) -> dict[tuple[str, ...], str]:
    table: dict[tuple[str, ...], str] = {}
    for v in values:
        words = tuple(v.split("_"))
        if len(words) > 1:
            table[words] = v
    return table


def _kb_triples(scenario: dict) -> tuple[list[tuple[str, str, str]], str]:
    intent = scenario.get("task", {}).get("intent", "navigate")
    subject_col = SUBJECT_COLUMNS.get(intent, "poi")
    items = (scenario.get("kb") or {}).get("items") or []
    triples: list[tuple[str, str, str]] = []
    for row in items:
        subj = row.get(subject_col)
        if subj in (None, "", "-"):
            continue
        subj = normalize_token(subj)
        for col, val in row.items():
            if col == subject_col or val in (None, "", "-"):
                continue
            triples.append((subj, normalize_token(col), normalize_token(val)))
    return triples, subject_col


def _global_entity_values(root: Path) -> set[str]:
    path = root / ENTITIES_FILE
    if not path.exists():
        return set()
    raw = json.loads(path.read_text())
    values: set[str] = set()
    for _, entries in raw.items():
        for v in entries:
            if isinstance(v, dict):
                values.update(normalize_token(x) for x in v.values())
            else:
                values.add(normalize_token(v))
    return values


def _load_sidecar_deps(path: Path) -> dict[str, list]:
    sidecar = path.with_name(path.name + ".deps.jsonl")
    if not sidecar.exists():
        return {}
    out: dict[str, list] = {}
    with sidecar.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out[str(rec["uuid"])] = rec["turns"]
            except (json.JSONDecodeError, KeyError) as e:
                raise DataError(f"{sidecar}:{lineno}: bad dependency record ({e})")
    return out


def load_smd_file(path: str | Path) -> list[Dialogue]:
    """Load one kvret split file into canonical dialogues."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"SMD file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path} is not valid JSON: {e}")
    if not isinstance(raw, list):
        raise DataError(f"{path}: expected a JSON list of dialogues")

    global_entities = _global_entity_values(path.parent)
    deps_by_uuid = _load_sidecar_deps(path)

    dialogues: list[Dialogue] = []
    for i, rec in enumerate(raw):
        try:
            scenario = rec["scenario"]
            uuid = str(scenario.get("uuid", f"smd-{i}"))
            intent = scenario.get("task", {}).get("intent", "navigate")
            triples, subject_col = _kb_triples(scenario)
            lexicon = set(global_entities)
            for s, _, o in triples:
                lexicon.add(s)
                lexicon.add(o)
            phrases = _phrase_table(lexicon)
            turn_deps = deps_by_uuid.get(uuid, [])
            turns: list[Turn] = []
            for j, t in enumerate(rec["dialogue"]):
                speaker = "user" if t["turn"] == "driver" else "system"
                tokens = _canonicalize_entities(
                    tokenize_utterance(t["data"]["utterance"]), phrases)
                if not tokens:
                    continue
                deps_raw = turn_deps[j] if j < len(turn_deps) else []
                turns.append(Turn(
                    speaker=speaker,
                    tokens=tokens,
                    deps=_dep_edges(deps_raw, len(tokens), f"{path}:dialogue {i} turn {j}"),
                ))
            if not turns:
                continue
            dialogues.append(Dialogue(
                dialogue_id=uuid,
                domain=intent,
                turns=turns,
                kb=triples,
                subject_type=subject_col,
            ))
        except (KeyError, TypeError) as e:
            raise DataError(f"{path}: malformed dialogue record {i}: {e}")
    return dialogues


def load_smd_split(root: str | Path, split: str) -> list[Dialogue]:
    root = Path(root)
    if split not in SPLIT_FILES:
        raise DataError(f"unknown SMD split {split!r}; expected train/dev/test")
    return load_smd_file(root / SPLIT_FILES[split])


def load_smd_ontology(root: str | Path) -> Ontology:
    """Slot types from the global kvret entity file."""
    path = Path(root) / ENTITIES_FILE
    if not path.exists():
        raise DataError(f"SMD entity file not found: {path}")
    raw = json.loads(path.read_text())
    types: dict[str, set[str]] = {}
    for slot, entries in raw.items():
        slot = normalize_token(slot)
        for v in entries:
            if isinstance(v, dict):
                for sub_slot, sub_v in v.items():
                    types.setdefault(normalize_token(sub_slot), set()).add(normalize_token(sub_v))
            else:
                types.setdefault(slot, set()).add(normalize_token(v))
    return _finish_ontology(types)
