"""Loader for MultiWOZ 2.1 into the canonical dialogue shape.

Reads the standard distribution: ``data.json`` (dialogue logs),
``valListFile.txt``/``testListFile.txt`` (split ids) and the per-domain
databases (``restaurant_db.json``, ``hotel_db.json``,
``attraction_db.json``, ``train_db.json``). Only the four KB-bearing
domains are kept; police/taxi/hospital dialogues are dropped.

Per-dialogue KBs are entity-anchored: a DB row joins the dialogue's KB
when its subject value (restaurant/hotel/attraction: ``name``, train:
``trainID``) is mentioned anywhere in the dialogue text. Rows normalize
to (subject, column, value) triples over scalar-valued columns.
Utterances are tokenized like the SMD loader (lowercase, punctuation
split, multi-word entities underscore-joined). Dependency edges attach
from an optional ``data.json.deps.jsonl`` sidecar keyed by dialogue id.
"""

from __future__ import annotations

import json
from pathlib import Path

from .data import Dialogue, Ontology, Turn, _dep_edges, _finish_ontology, normalize_token
from .errors import DataError
from .smd import _canonicalize_entities, _phrase_table, tokenize_utterance

KB_DOMAINS = ("restaurant", "hotel", "attraction", "train")
SUBJECT_COLUMNS = {"restaurant": "name", "hotel": "name",
                   "attraction": "name", "train": "trainID"}

__all__ = ["load_multiwoz_split", "load_multiwoz_ontology", "KB_DOMAINS"]


def _load_db(root: Path, domain: str) -> list[dict]:
    path = root / f"{domain}_db.json"
    if not path.exists():
        return []
    try:
        rows = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path} is not valid JSON: {e}")
    return rows if isinstance(rows, list) else []


def _row_triples(row: dict, subject_col: str) -> list[tuple[str, str, str]]:
    subj = row.get(subject_col)
    if subj in (None, "", "-"):
        return []
    subj = normalize_token(subj)
    triples = []
    for col, val in row.items():
        if col == subject_col or not isinstance(val, (str, int, float)):
            continue
        if val in ("", "-", "?"):
            continue
        triples.append((subj, normalize_token(col), normalize_token(val)))
    return triples


def _dialogue_domains(goal: dict) -> list[str]:
    return [d for d in KB_DOMAINS if isinstance(goal.get(d), dict) and goal.get(d)]


def _split_ids(root: Path, split: str, all_ids: list[str]) -> set[str]:
    def read_list(name: str) -> set[str]:
        path = root / name
        if not path.exists():
            raise DataError(f"MultiWOZ split file not found: {path}")
        return {line.strip() for line in path.read_text().splitlines() if line.strip()}

    if split in ("val", "dev"):
        return read_list("valListFile.txt")
    if split == "test":
        return read_list("testListFile.txt")
    if split == "train":
        held_out = read_list("valListFile.txt") | read_list("testListFile.txt")
        return {i for i in all_ids if i not in held_out}
    raise DataError(f"unknown MultiWOZ split {split!r}; expected train/dev/test")


def _load_sidecar_deps(root: Path) -> dict[str, list]:
    sidecar = root / "data.json.deps.jsonl"
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
                out[str(rec["id"])] = rec["turns"]
            except (json.JSONDecodeError, KeyError) as e:
                raise DataError(f"{sidecar}:{lineno}: bad dependency record ({e})")
    return out


def load_multiwoz_split(root: str | Path, split: str) -> list[Dialogue]:
    """Load one split restricted to the four KB-bearing domains."""
    root = Path(root)
    data_path = root / "data.json"
    if not data_path.exists():
        raise DataError(f"MultiWOZ data file not found: {data_path}")
    try:
        data = json.loads(data_path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{data_path} is not valid JSON: {e}")

    dbs = {d: _load_db(root, d) for d in KB_DOMAINS}
    deps_by_id = _load_sidecar_deps(root)
    wanted = _split_ids(root, split, list(data.keys()))

    dialogues: list[Dialogue] = []
    for dlg_id in sorted(data.keys()):
        if dlg_id not in wanted:
            continue
        rec = data[dlg_id]
        domains = _dialogue_domains(rec.get("goal", {}))
        if not domains:
            continue
        domain = domains[0]
        subject_col = SUBJECT_COLUMNS[domain]

        log = rec.get("log", [])
        full_text = normalize_token(" ".join(t.get("text", "") for t in log))
        triples: list[tuple[str, str, str]] = []
        lexicon: set[str] = set()
        for row in dbs[domain]:
            subj = row.get(subject_col)
            if subj in (None, "", "-"):
                continue
            if normalize_token(subj) in full_text:
                row_triples = _row_triples(row, subject_col)
                triples.extend(row_triples)
                for s, _, o in row_triples:
                    lexicon.add(s)
                    lexicon.add(o)
        phrases = _phrase_table(lexicon)

        turn_deps = deps_by_id.get(dlg_id, [])
        turns: list[Turn] = []
        for j, t in enumerate(log):
            tokens = _canonicalize_entities(tokenize_utterance(t.get("text", "")), phrases)
            if not tokens:
                continue
            # user and system turns alternate, user first
            speaker = "user" if j % 2 == 0 else "system"
            deps_raw = turn_deps[j] if j < len(turn_deps) else []
            turns.append(Turn(speaker=speaker, tokens=tokens,
                              deps=_dep_edges(deps_raw, len(tokens),
                                              f"{data_path}:{dlg_id} turn {j}")))
        if not turns:
            continue
        dialogues.append(Dialogue(
            dialogue_id=dlg_id,
            domain=domain,
            turns=turns,
            kb=sorted(set(triples)),
            subject_type=normalize_token(subject_col),
        ))
    return dialogues


def load_multiwoz_ontology(root: str | Path) -> Ontology:
    """Slot types straight from the four domain databases."""
    root = Path(root)
    types: dict[str, set[str]] = {}
    for domain in KB_DOMAINS:
        subject_col = SUBJECT_COLUMNS[domain]
        for row in _load_db(root, domain):
            for subj, rel, obj in _row_triples(row, subject_col):
                types.setdefault(rel, set()).add(obj)
                types.setdefault(normalize_token(subject_col), set()).add(subj)
    if not types:
        raise DataError(f"no MultiWOZ databases found under {root}")
    return _finish_ontology(types)
