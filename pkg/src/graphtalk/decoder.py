"""GRU sketch decoder with vocabulary/graph heads and the copy rule.

The decoder starts from the concatenation of the history encoding and
the knowledge-graph readout, generates sketch tokens greedily, and
whenever the sketch token is a slot tag copies the entity whose node
holds the largest graph-attention weight. The graph head re-queries the
knowledge graph at every step with a learned projection of the hidden
state; its last-hop node distribution is the copy pointer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .errors import DataError, ShapeError
from .kgraph import HopTrace, KnowledgeGraph, LevelState, multi_hop
from .optim import new_parameter
from .vocab import SketchVocabulary

__all__ = [
    "DecoderParams",
    "DecodeStep",
    "init_hidden",
    "gru_step",
    "vocab_dist",
    "graph_dist",
    "copy_or_generate",
    "joint_loss",
    "greedy_decode",
]


class DecoderParams:
    """GRU gate weights, output projection and graph-query projection."""

    def __init__(self, store: ParameterStore, vocab_size: int, embed_size: int,
                 hidden_size: int, entity_dim: int, seed: int, prefix: str = "decoder"):
        h, e = hidden_size, embed_size
        self.hidden_size = h
        self.embed_size = e
        for gate in ("update", "reset", "cand"):
            setattr(self, f"{gate}_input",
                    new_parameter(store, f"{prefix}.{gate}_input", (h, e), seed))
            setattr(self, f"{gate}_hidden",
                    new_parameter(store, f"{prefix}.{gate}_hidden", (h, h), seed))
            setattr(self, f"{gate}_bias",
                    new_parameter(store, f"{prefix}.{gate}_bias", (h,), seed, scheme="zeros"))
        self.out_proj = new_parameter(store, f"{prefix}.out_proj", (vocab_size, h), seed)
        self.query_proj = new_parameter(store, f"{prefix}.query_proj", (entity_dim, h), seed)


@dataclass
class DecodeStep:
    """One greedy step: what was emitted and why."""

    sketch_id: int
    sketch_token: str
    surface_token: str
    copied_node: int | None
    copy_failed: bool
    node_dist: np.ndarray | None


def init_hidden(encoding: Tensor, kg_readout: Tensor) -> Tensor:
    """Initial decoder state: [history encoding || graph readout]."""
    return ad.concat([encoding, kg_readout])


def gru_step(params: DecoderParams, x_emb: Tensor, h_prev: Tensor) -> Tensor:
    """One GRU update: h = (1-z) * h_prev + z * cand."""
    if x_emb.shape != (params.embed_size,) or h_prev.shape != (params.hidden_size,):
        raise ShapeError(
            f"gru_step got x {x_emb.shape}, h {h_prev.shape}; expected "
            f"({params.embed_size},), ({params.hidden_size},)")
    z = ad.sigmoid(ad.add(ad.add(ad.matmul(params.update_input, x_emb),
                                 ad.matmul(params.update_hidden, h_prev)),
                          params.update_bias))
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(params.reset_input, x_emb),
                                 ad.matmul(params.reset_hidden, h_prev)),
                          params.reset_bias))
    cand = ad.tanh(ad.add(ad.add(ad.matmul(params.cand_input, x_emb),
                                 ad.matmul(params.cand_hidden, ad.mul(r, h_prev))),
                          params.cand_bias))
    one_minus_z = ad.add(ad.neg(z), Tensor(np.ones(params.hidden_size)))
    return ad.add(ad.mul(one_minus_z, h_prev), ad.mul(z, cand))


def vocab_dist(params: DecoderParams, h_t: Tensor) -> Tensor:
    """Softmax over the word vocabulary."""
    logits = ad.matmul(params.out_proj, h_t)
    return ad.masked_softmax(logits, np.ones(logits.shape, dtype=bool))


def graph_dist(params: DecoderParams, h_t: Tensor, levels: list[LevelState],
               hops: int, graph: KnowledgeGraph
               ) -> tuple[Tensor | None, HopTrace | None]:
    """Node distribution from a fresh multi-hop query, or None on an empty KB."""
    if not len(graph):
        return None, None
    q0 = ad.matmul(params.query_proj, h_t)
    _, p_last, trace = multi_hop(q0, levels, hops, graph)
    return p_last, trace


def copy_or_generate(vocab_probs: np.ndarray, node_dist: np.ndarray | None,
                     vocab: SketchVocabulary, graph: KnowledgeGraph
                     ) -> tuple[str, int, int | None, bool]:
    """Apply the copy rule to one step's two distributions.

    Returns (surface token, sketch id, copied node id, copy_failed).
    Argmax ties resolve to the lowest id on both heads. A tag with no
    graph to copy from is emitted literally and flagged.
    """
    sketch_id = int(np.argmax(vocab_probs))
    sketch_token = vocab.decode(sketch_id)
    if not vocab.is_tag_id(sketch_id):
        return sketch_token, sketch_id, None, False
    if node_dist is None or not len(graph):
        return sketch_token, sketch_id, None, True
    node = int(np.argmax(node_dist))
    return graph.nodes[node].token, sketch_id, node, False


def joint_loss(step_vocab: list[Tensor], target_ids: list[int],
               step_graph: list[Tensor | None], graph_labels: list[int | None]
               ) -> Tensor:
    """Mean vocab cross-entropy plus mean graph cross-entropy.

    Sequences must be aligned (pads already excluded by the caller; a
    None graph label skips the step's graph term). Both means use
    exactly-rounded accumulation, so the value is independent of step
    and batch order.
    """
    if not (len(step_vocab) == len(target_ids) == len(step_graph) == len(graph_labels)):
        raise ShapeError("joint_loss requires aligned sequences")
    if not step_vocab:
        raise ShapeError("joint_loss on an empty sequence")
    vocab_terms = []
    graph_terms = []
    for t, (pv, y) in enumerate(zip(step_vocab, target_ids)):
        if not (0 <= y < pv.shape[0]):
            raise DataError(f"target id {y} out of range at timestep {t}")
        vocab_terms.append(ad.neg(ad.log(ad.gather(pv, int(y)))))
    for t, (pg, label) in enumerate(zip(step_graph, graph_labels)):
        if label is None:
            continue
        if pg is None:
            raise DataError(f"graph label without graph distribution at timestep {t}")
        if not (0 <= label < pg.shape[0]):
            raise DataError(f"graph label {label} out of range at timestep {t}")
        graph_terms.append(ad.neg(ad.log(ad.gather(pg, int(label)))))
    loss = ad.divs(ad.add_n(vocab_terms), float(len(vocab_terms)))
    if graph_terms:
        loss = ad.add(loss, ad.divs(ad.add_n(graph_terms), float(len(graph_terms))))
    return loss


def greedy_decode(params: DecoderParams, vocab: SketchVocabulary,
                  embed_table: Tensor, h0: Tensor, levels: list[LevelState],
                  hops: int, graph: KnowledgeGraph, max_len: int
                  ) -> list[DecodeStep]:
    """Greedy generation; the sketch token (not the copy) feeds back.

    Stops after emitting the end marker or at ``max_len`` steps; the end
    marker itself is not part of the returned steps.
    """
    steps: list[DecodeStep] = []
    h = h0
    prev_id = vocab.sos_id
    for _ in range(max_len):
        x = ad.gather(embed_table, prev_id)
        h = gru_step(params, x, h)
        pv = vocab_dist(params, h)
        pg, _ = graph_dist(params, h, levels, hops, graph)
        surface, sketch_id, node, failed = copy_or_generate(
            pv.data, None if pg is None else pg.data, vocab, graph)
        if sketch_id == vocab.eos_id:
            break
        steps.append(DecodeStep(
            sketch_id=sketch_id,
            sketch_token=vocab.decode(sketch_id),
            surface_token=surface,
            copied_node=node,
            copy_failed=failed,
            node_dist=None if pg is None else pg.data.copy(),
        ))
        prev_id = sketch_id
    return steps
