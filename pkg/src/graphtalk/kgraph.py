"""Entity graph construction and multi-hop attention reasoning.

KB records arrive as (subject, relation, object) triples. Subjects
become one node per distinct value; attribute values become one node
per (value, subject) pair so the same surface value attached to two
subjects stays distinguishable. Every triple contributes an undirected
edge and every node carries a self-loop.

Reasoning runs over K hops with per-level parameters (an embedding
table and an attention vector per level 1..K+1, adjacent levels tied:
hop k reads level k and writes through level k+1, which hop k+1 then
reads). Each level's node vectors are refreshed once per evaluation by
neighborhood self-attention and reused by every query.

All node-indexed arithmetic is per-node (1-D dots, exactly-rounded
weighted sums), which makes the whole pipeline bitwise equivariant
under node relabeling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, ParameterStore, Tensor
from .errors import ConfigError, DataError, ShapeError
from .optim import new_parameter

__all__ = [
    "KGNode",
    "KnowledgeGraph",
    "KGParams",
    "LevelState",
    "HopTrace",
    "build_kb_graph",
    "neighbor_attention",
    "node_update",
    "update_level",
    "query_attend",
    "readout",
    "multi_hop",
]

LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class KGNode:
    node_id: int
    token: str       # entity surface form
    slot: str        # slot type used for sketch tags
    row: str         # subject value grouping the KB row ("" for subject nodes)
    is_subject: bool


@dataclass
class KnowledgeGraph:
    """Entity nodes with first-order neighborhoods (self-loop included)."""

    nodes: list[KGNode] = field(default_factory=list)
    neighbors: list[list[int]] = field(default_factory=list)
    relations: dict[tuple[int, int], str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    def tokens(self) -> list[str]:
        return [n.token for n in self.nodes]

    def nodes_with_token(self, token: str) -> list[KGNode]:
        return [n for n in self.nodes if n.token == token]


def build_kb_graph(triples: list[tuple[str, str, str]],
                   subject_slots: dict[str, str] | None = None) -> KnowledgeGraph:
    """Build the undirected entity graph from KB triples.

    ``subject_slots`` optionally maps subject values to their slot type
    (defaults to "entity"). Duplicate triples collapse; an empty triple
    list yields a valid empty graph.
    """
    subject_slots = subject_slots or {}
    g = KnowledgeGraph()
    node_ids: dict[tuple[str, str], int] = {}  # (token, row-key) -> id

    def intern(token: str, slot: str, row: str, is_subject: bool) -> int:
        key = (token, "" if is_subject else row)
        if key in node_ids:
            return node_ids[key]
        nid = len(g.nodes)
        node_ids[key] = nid
        g.nodes.append(KGNode(nid, token, slot, "" if is_subject else row, is_subject))
        g.neighbors.append([nid])  # self-loop
        return nid

    def connect(i: int, j: int, rel: str) -> None:
        if j not in g.neighbors[i]:
            g.neighbors[i].append(j)
            g.neighbors[j].append(i)
        g.relations.setdefault((min(i, j), max(i, j)), rel)

    for k, triple in enumerate(triples):
        if len(triple) != 3:
            raise DataError(f"KB record {k} is not a (subject, relation, object) triple")
        subj, rel, obj = (str(x) for x in triple)
        si = intern(subj, subject_slots.get(subj, "entity"), "", True)
        oi = intern(obj, rel, subj, False)
        connect(si, oi, rel)

    for lst in g.neighbors:
        lst.sort()
    return g


class KGParams:
    """Per-level embedding tables and attention vectors (levels 1..K+1)."""

    def __init__(self, store: ParameterStore, entity_vocab_size: int,
                 entity_dim: int, hops: int, seed: int, prefix: str = "kg"):
        if hops < 1:
            raise ConfigError("hop count must be >= 1")
        self.hops = hops
        self.entity_dim = entity_dim
        self.embeddings: list[Parameter] = []
        self.attention: list[Parameter] = []
        for level in range(1, hops + 2):
            self.embeddings.append(new_parameter(
                store, f"{prefix}.embed.{level}", (entity_vocab_size, entity_dim), seed))
            self.attention.append(new_parameter(
                store, f"{prefix}.attn.{level}", (2 * entity_dim,), seed))

    def level(self, k: int) -> tuple[Parameter, Parameter]:
        """1-based level access."""
        return self.embeddings[k - 1], self.attention[k - 1]


@dataclass
class LevelState:
    """One level's node vectors after neighborhood self-attention."""

    embeds: list[Tensor]          # raw per-node embedding rows
    alphas: list[Tensor]          # per-node coefficients over its neighbors
    updated: list[Tensor]         # refreshed per-node vectors
    matrix: Tensor | None         # stacked updated vectors (n, d_e)


@dataclass
class HopTrace:
    """Everything one multi-hop evaluation computed, hop by hop."""

    queries: list[np.ndarray]     # q^1 .. q^{K+1}
    node_dists: list[np.ndarray]  # p^1 .. p^K
    readouts: list[np.ndarray]    # o^1 .. o^K
    read_alphas: list[list[np.ndarray]]  # per hop, per node


def neighbor_attention(embeds: list[Tensor], attn_vec: Parameter,
                       graph: KnowledgeGraph) -> list[Tensor]:
    """Self-attention coefficients per node over its neighborhood.

    Logits are LeakyReLU(v . [C_i || C_j]) split as v1.C_i + v2.C_j;
    each row normalizes over the node's neighbor list.
    """
    n = len(graph)
    if len(embeds) != n:
        raise ShapeError("one embedding per node required")
    d = embeds[0].shape[0] if n else 0
    v_self = ad.gather(attn_vec, np.arange(d))
    v_other = ad.gather(attn_vec, np.arange(d, 2 * d))
    a = [ad.dot(e, v_self) for e in embeds]
    b = [ad.dot(e, v_other) for e in embeds]
    alphas = []
    for i in range(n):
        row = ad.leaky_relu(ad.stack([ad.add(a[i], b[j]) for j in graph.neighbors[i]]),
                            LEAKY_SLOPE)
        alphas.append(ad.masked_softmax(row, np.ones(row.shape, dtype=bool)))
    return alphas


def node_update(embeds: list[Tensor], alphas: list[Tensor],
                graph: KnowledgeGraph) -> list[Tensor]:
    """Refresh each node as the coefficient-weighted sum of its neighborhood."""
    updated = []
    for i in range(len(graph)):
        rows = ad.stack([embeds[j] for j in graph.neighbors[i]])
        updated.append(ad.weighted_rows_sum(alphas[i], rows))
    return updated


def update_level(embed_table: Parameter, attn_vec: Parameter,
                 graph: KnowledgeGraph, token_ids: np.ndarray) -> LevelState:
    """Gather one level's node vectors and run the self-attention refresh."""
    embeds = [ad.gather(embed_table, int(t)) for t in token_ids]
    if not embeds:
        return LevelState(embeds=[], alphas=[], updated=[], matrix=None)
    alphas = neighbor_attention(embeds, attn_vec, graph)
    updated = node_update(embeds, alphas, graph)
    return LevelState(embeds=embeds, alphas=alphas, updated=updated,
                      matrix=ad.stack(updated))


def query_attend(query: Tensor, level: LevelState) -> Tensor:
    """Distribution over all nodes from dot-product scores with the query."""
    logits = ad.stack([ad.dot(query, u) for u in level.updated])
    return ad.masked_softmax(logits, np.ones(logits.shape, dtype=bool))


def readout(node_dist: Tensor, level: LevelState) -> Tensor:
    """Weighted sum of a level's refreshed node vectors."""
    return ad.weighted_rows_sum(node_dist, level.matrix)


def multi_hop(q0: Tensor, levels: list[LevelState], hops: int,
              graph: KnowledgeGraph) -> tuple[Tensor, Tensor, HopTrace]:
    """Iterate hops 1..K, updating the query additively after each readout.

    ``levels`` holds the refreshed states for levels 1..K+1; hop k
    scores against level k and reads out through level k+1 (the same
    object hop k+1 scores against). Returns the final readout, the
    final-hop node distribution, and the full trace.
    """
    if hops < 1:
        raise ConfigError("hop count must be >= 1")
    if not len(graph):
        raise DataError("multi_hop on an empty graph")
    if len(levels) != hops + 1:
        raise ShapeError(f"need {hops + 1} level states, got {len(levels)}")

    trace = HopTrace(queries=[q0.data.copy()], node_dists=[], readouts=[], read_alphas=[])
    q = q0
    p = None
    o = None
    for k in range(1, hops + 1):
        read, write = levels[k - 1], levels[k]
        p = query_attend(q, read)
        o = readout(p, write)
        q = ad.add(q, o)
        trace.node_dists.append(p.data.copy())
        trace.readouts.append(o.data.copy())
        trace.queries.append(q.data.copy())
        trace.read_alphas.append([a.data.copy() for a in read.alphas])
    return o, p, trace
