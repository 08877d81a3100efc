"""Full model: history encoder, knowledge-graph reasoner and sketch decoder.

One :class:`DialogueModel` owns every parameter. A forward pass over a
training example encodes the history graph bidirectionally, queries the
knowledge graph with the encoding, teacher-forces the decoder over the
sketch target and returns the per-step distributions the joint loss
consumes. Decoding swaps teacher forcing for greedy search plus the
copy rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .config import RunConfig
from .data import TrainingExample, Batch
from .decoder import (DecoderParams, DecodeStep, graph_dist, greedy_decode,
                      gru_step, init_hidden, joint_loss, vocab_dist)
from .dialog_graph import build_graph, pad_predecessors, split_directional
from .encoder import EncoderDirectionParams, encode_direction
from .errors import ContractError
from .kgraph import KGParams, LevelState, multi_hop, update_level
from .optim import new_parameter
from .vocab import EntityVocabulary, SketchVocabulary

__all__ = ["DialogueModel", "ExampleForward"]


@dataclass
class ExampleForward:
    """Teacher-forced distributions for one example, aligned step-wise."""

    vocab_dists: list[Tensor]
    target_ids: list[int]
    graph_dists: list[Tensor | None]
    graph_labels: list[int | None]


class DialogueModel:
    """Parameters plus forward/decode logic for one configuration."""

    def __init__(self, config: RunConfig, vocab: SketchVocabulary,
                 entity_vocab: EntityVocabulary):
        config.validate()
        self.config = config
        self.vocab = vocab
        self.entity_vocab = entity_vocab
        self.store = ParameterStore()

        d = config.hidden_size
        seed = config.seed
        self.embed = new_parameter(self.store, "embed.word",
                                   (len(vocab), config.embed_size), seed)
        self.enc_fwd = EncoderDirectionParams(self.store, "encoder.fwd", d,
                                              config.embed_size, seed)
        if config.tie_directions:
            self.enc_bwd = self.enc_fwd
        else:
            self.enc_bwd = EncoderDirectionParams(self.store, "encoder.bwd", d,
                                                  config.embed_size, seed)
        self.kg = KGParams(self.store, len(entity_vocab), config.entity_dim,
                           config.hops, seed)
        self.decoder_hidden = 2 * d + config.entity_dim
        self.dec = DecoderParams(self.store, len(vocab), config.embed_size,
                                 self.decoder_hidden, config.entity_dim, seed)
        self.enc_query_proj = None
        if config.query_projection:
            self.enc_query_proj = new_parameter(self.store, "encoder.query_proj",
                                                (config.entity_dim, 2 * d), seed)

        self._view_cache: dict[int, tuple] = {}

    # ------------------------------------------------------------------
    # pieces

    def _views(self, example: TrainingExample):
        key = id(example)
        cached = self._view_cache.get(key)
        if cached is None:
            g = build_graph(example.tokens, example.deps,
                            sequential_only=self.config.sequential_only)
            fwd, bwd = split_directional(g)
            cached = (pad_predecessors(fwd, self.config.k_max),
                      pad_predecessors(bwd, self.config.k_max))
            self._view_cache[key] = cached
        return cached

    def _dropout(self, x: Tensor, rng: np.random.Generator | None) -> Tensor:
        rate = self.config.dropout
        if rng is None or rate == 0.0:
            return x
        keep = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
        return ad.mul(x, Tensor(keep))

    def encode_history(self, example: TrainingExample,
                       rng: np.random.Generator | None = None) -> Tensor:
        """Bidirectional graph encoding of the dialogue history."""
        fwd_padded, bwd_padded = self._views(example)
        ids = self.vocab.encode_all(example.tokens.tokens)
        embeddings = [self._dropout(ad.gather(self.embed, i), rng) for i in ids]
        fwd_last, _ = encode_direction(self.enc_fwd, fwd_padded, embeddings)
        bwd_last, _ = encode_direction(self.enc_bwd, bwd_padded, embeddings)
        return self._dropout(ad.concat([fwd_last, bwd_last]), rng)

    def kg_levels(self, example: TrainingExample) -> list[LevelState]:
        """Refresh node vectors for levels 1..K+1 (empty list on empty KB)."""
        graph = example.graph
        if not len(graph):
            return []
        token_ids = np.array(self.entity_vocab.encode_all(graph.tokens()), dtype=np.int64)
        return [update_level(emb, attn, graph, token_ids)
                for emb, attn in zip(self.kg.embeddings, self.kg.attention)]

    def encoder_query(self, encoding: Tensor) -> Tensor:
        if self.enc_query_proj is not None:
            return ad.matmul(self.enc_query_proj, encoding)
        if encoding.shape != (self.config.entity_dim,):
            raise ContractError(
                f"encoding size {encoding.shape[0]} does not match entity_dim "
                f"{self.config.entity_dim}; enable query_projection")
        return encoding

    def initial_state(self, example: TrainingExample,
                      rng: np.random.Generator | None = None
                      ) -> tuple[Tensor, list[LevelState]]:
        """Encoder + first knowledge-graph read; returns (h0, level states)."""
        encoding = self.encode_history(example, rng)
        levels = self.kg_levels(example)
        if levels:
            o_last, _, _ = multi_hop(self.encoder_query(encoding), levels,
                                     self.config.hops, example.graph)
        else:
            o_last = Tensor(np.zeros(self.config.entity_dim))
        return init_hidden(encoding, o_last), levels

    # ------------------------------------------------------------------
    # training forward

    def forward_example(self, example: TrainingExample,
                        rng: np.random.Generator | None = None,
                        target_ids: list[int] | None = None,
                        labels: list[int | None] | None = None) -> ExampleForward:
        """Teacher-forced pass over the example's sketch target."""
        h, levels = self.initial_state(example, rng)
        if target_ids is None:
            target_ids = self.vocab.encode_all(example.sketch) + [self.vocab.eos_id]
        if labels is None:
            labels = list(example.graph_labels) + [None]
        feed = [self.vocab.sos_id] + list(target_ids[:-1])
        vocab_dists: list[Tensor] = []
        graph_dists: list[Tensor | None] = []
        for prev in feed:
            x = ad.gather(self.embed, int(prev))
            h = gru_step(self.dec, x, h)
            vocab_dists.append(vocab_dist(self.dec, h))
            pg, _ = graph_dist(self.dec, h, levels, self.config.hops, example.graph)
            graph_dists.append(pg)
        return ExampleForward(vocab_dists, target_ids, graph_dists, labels)

    def batch_loss(self, batch: Batch, rng: np.random.Generator | None = None) -> Tensor:
        """Joint loss over the batch's padded target block, pads excluded."""
        step_vocab: list[Tensor] = []
        target_ids: list[int] = []
        step_graph: list[Tensor | None] = []
        labels: list[int | None] = []
        for r, ex in enumerate(batch.examples):
            keep = batch.target_mask[r]
            row_targets = [int(t) for t in batch.target_ids[r][keep]]
            row_labels = list(batch.graph_labels[r][:len(row_targets)])
            fwd = self.forward_example(ex, rng, row_targets, row_labels)
            step_vocab.extend(fwd.vocab_dists)
            target_ids.extend(fwd.target_ids)
            step_graph.extend(fwd.graph_dists)
            labels.extend(fwd.graph_labels)
        return joint_loss(step_vocab, target_ids, step_graph, labels)

    def token_accuracy(self, examples: list[TrainingExample]) -> float:
        """Teacher-forced next-sketch-token accuracy over real steps."""
        hits = 0
        total = 0
        for ex in examples:
            fwd = self.forward_example(ex, rng=None)
            for pv, y in zip(fwd.vocab_dists, fwd.target_ids):
                hits += int(np.argmax(pv.data) == y)
                total += 1
        return hits / total if total else 0.0

    # ------------------------------------------------------------------
    # inference

    def decode_example(self, example: TrainingExample) -> list[DecodeStep]:
        h0, levels = self.initial_state(example, rng=None)
        return greedy_decode(self.dec, self.vocab, self.embed, h0, levels,
                             self.config.hops, example.graph,
                             self.config.max_decode_len)

    def respond(self, example: TrainingExample) -> tuple[list[str], list[str], list[DecodeStep]]:
        """Greedy sketch + surface response for one example."""
        steps = self.decode_example(example)
        sketch = [s.sketch_token for s in steps]
        surface = [s.surface_token for s in steps]
        return sketch, surface, steps

    def inspect(self, example: TrainingExample) -> list[dict]:
        """Per-step attention dump for the inspector CLI."""
        steps = self.decode_example(example)
        node_tokens = example.graph.tokens()
        out = []
        for t, s in enumerate(steps):
            weights = None
            if s.node_dist is not None:
                weights = [{"node": i, "token": node_tokens[i], "weight": float(w)}
                           for i, w in enumerate(s.node_dist)]
            out.append({
                "step": t,
                "token": s.surface_token,
                "sketch_token": s.sketch_token,
                "is_tag": self.vocab.is_tag_id(s.sketch_id),
                "copied_node": s.copied_node,
                "copy_failed": s.copy_failed,
                "node_weights": weights,
            })
        return out

    # ------------------------------------------------------------------
    # parameter io

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.store}

    def load_param_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        names = set(self.store.names())
        if names != set(arrays):
            missing = names - set(arrays)
            extra = set(arrays) - names
            raise ContractError(
                f"parameter set mismatch: missing {sorted(missing)[:3]}, "
                f"unexpected {sorted(extra)[:3]}")
        for p in self.store:
            arr = np.asarray(arrays[p.name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ContractError(f"shape mismatch for {p.name!r}")
            p.data = arr.copy()
