"""Deterministic synthetic corpus for overfitting and smoke runs.

Each dialogue is one user question plus one system answer grounded in a
three-attribute KB row (place, distance, address, category). The corpus
is small enough to memorize in minutes on a CPU and exercises every
model component: dependency edges, graph construction, copying and
delexicalization.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import Dialogue, Ontology, Turn, _finish_ontology
from .dialog_graph import DepEdge

__all__ = ["toy_corpus", "toy_ontology", "write_toy_corpus"]

_PLACES = [
    "harbor_cafe", "elm_garage", "maple_bistro", "oak_pharmacy", "pine_diner",
    "cedar_inn", "birch_market", "willow_theater", "aspen_gym", "spruce_library",
    "lake_deli", "hill_bakery", "stone_hotel", "river_garage", "sunset_grill",
    "meadow_clinic", "grove_station", "valley_mall", "canyon_cafe", "summit_spa",
    "dune_motel", "palm_lounge", "fern_books", "ivy_florist",
]
_DISTANCES = ["1_miles", "2_miles", "3_miles", "4_miles", "5_miles", "6_miles"]
_ADDRESSES = [
    "102_main_st", "17_oak_ave", "88_pine_rd", "5_lake_blvd", "240_hill_way",
    "63_river_ln", "301_park_dr", "9_bay_ct", "150_elm_st", "42_gate_pl",
]
_CATEGORIES = ["coffee_shop", "parking_garage", "pharmacy", "restaurant",
               "hotel", "gym", "theater", "market"]

_QUESTIONS = [
    ("where is the closest {cat} ?", [(0, 3, "advmod"), (1, 4, "nsubj"), (4, 2, "det")]),
    ("find me the nearest {cat} please", [(0, 4, "dobj"), (4, 2, "det"), (4, 3, "amod")]),
    ("i need directions to a {cat} now", [(1, 5, "obl"), (1, 0, "nsubj"), (5, 4, "det")]),
]
_ANSWER = ("{poi} is {dist} away at {addr}", [(1, 0, "nsubj"), (1, 3, "advmod"), (1, 5, "obl")])


def toy_ontology() -> Ontology:
    return _finish_ontology({
        "poi": set(_PLACES),
        "distance": set(_DISTANCES),
        "address": set(_ADDRESSES),
        "category": set(_CATEGORIES),
    })


def _turn(speaker: str, template: str, deps: list[tuple[int, int, str]], **slots) -> Turn:
    tokens = template.format(**slots).split()
    return Turn(speaker=speaker, tokens=tokens,
                deps=[DepEdge(h, d, label) for h, d, label in deps])


def toy_corpus(n_dialogues: int = 20, seed: int = 7) -> list[Dialogue]:
    rng = np.random.default_rng(seed)
    places = list(_PLACES)
    dialogues: list[Dialogue] = []
    for i in range(n_dialogues):
        poi = places[i % len(places)]
        dist = _DISTANCES[int(rng.integers(len(_DISTANCES)))]
        addr = _ADDRESSES[int(rng.integers(len(_ADDRESSES)))]
        cat = _CATEGORIES[int(rng.integers(len(_CATEGORIES)))]
        q_template, q_deps = _QUESTIONS[int(rng.integers(len(_QUESTIONS)))]
        question = _turn("user", q_template, q_deps, cat=cat)
        a_template, a_deps = _ANSWER
        answer = _turn("system", a_template, a_deps, poi=poi, dist=dist, addr=addr)
        kb = [(poi, "distance", dist), (poi, "address", addr), (poi, "category", cat)]
        dialogues.append(Dialogue(
            dialogue_id=f"toy-{i:03d}",
            domain="navigate",
            turns=[question, answer],
            kb=kb,
            subject_type="poi",
        ))
    return dialogues


def write_toy_corpus(outdir: str | Path, n_dialogues: int = 20, seed: int = 7
                     ) -> tuple[Path, Path]:
    """Write train.jsonl and ontology.json; returns their paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    corpus_path = outdir / "train.jsonl"
    with corpus_path.open("w") as fh:
        for d in toy_corpus(n_dialogues, seed):
            fh.write(json.dumps({
                "id": d.dialogue_id,
                "domain": d.domain,
                "subject_type": d.subject_type,
                "turns": [{"speaker": t.speaker,
                           "tokens": t.tokens,
                           "deps": [[e.head, e.dependent, e.label] for e in t.deps]}
                          for t in d.turns],
                "kb": [list(t) for t in d.kb],
            }) + "\n")
    onto = toy_ontology()
    ontology_path = outdir / "ontology.json"
    ontology_path.write_text(json.dumps(
        {t: sorted(vs) for t, vs in onto.types.items()}, indent=2, sort_keys=True))
    return corpus_path, ontology_path
