"""Graph recurrent encoder.

The cell consumes, at each position, the current token embedding plus
the hidden states of all predecessor positions in the directional view.
It computes one reset gate per predecessor, a candidate state from the
gated predecessor average, and pools {transformed predecessors,
candidate} with masked attention queried by the transformed input.

All per-slot arithmetic is vector-shaped (no stacked matmuls) and all
reductions are exactly rounded, so on a pure chain the cell is bitwise
identical to a plain k=1 recurrence, and padding/permuting predecessor
slots changes nothing.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .dialog_graph import VIRTUAL, PaddedPredecessors
from .errors import ShapeError
from .optim import new_parameter

__all__ = [
    "EncoderDirectionParams",
    "reset_gates",
    "candidate_state",
    "attention_pool",
    "encode_direction",
    "encode_bidirectional",
]


class EncoderDirectionParams:
    """Weights of the recurrent cell for one traversal direction."""

    FIELDS = (
        "reset_input", "reset_hidden",
        "cand_input", "cand_hidden",
        "attn_input", "attn_hidden",
        "attn_vector",
    )

    def __init__(self, store: ParameterStore, prefix: str, hidden_size: int,
                 embed_size: int, seed: int):
        d, d_in = hidden_size, embed_size
        self.hidden_size = d
        self.embed_size = d_in
        self.reset_input = new_parameter(store, f"{prefix}.reset_input", (d, d_in), seed)
        self.reset_hidden = new_parameter(store, f"{prefix}.reset_hidden", (d, d), seed)
        self.cand_input = new_parameter(store, f"{prefix}.cand_input", (d, d_in), seed)
        self.cand_hidden = new_parameter(store, f"{prefix}.cand_hidden", (d, d), seed)
        self.attn_input = new_parameter(store, f"{prefix}.attn_input", (d, d_in), seed)
        self.attn_hidden = new_parameter(store, f"{prefix}.attn_hidden", (d, d), seed)
        self.attn_vector = new_parameter(store, f"{prefix}.attn_vector", (d,), seed)


def reset_gates(params: EncoderDirectionParams, x_t: Tensor,
                pred_states: list[Tensor]) -> list[Tensor]:
    """One sigmoid gate per predecessor state."""
    if not pred_states:
        raise ShapeError("reset_gates needs at least one predecessor state")
    wx = ad.matmul(params.reset_input, x_t)
    return [ad.sigmoid(ad.add(wx, ad.matmul(params.reset_hidden, h))) for h in pred_states]


def candidate_state(params: EncoderDirectionParams, x_t: Tensor,
                    pred_states: list[Tensor], gates: list[Tensor]) -> Tensor:
    """tanh of the input transform plus the gated predecessor average."""
    if len(gates) != len(pred_states):
        raise ShapeError("one gate per predecessor state required")
    k = len(pred_states)
    terms = [ad.mul(r, ad.matmul(params.cand_hidden, h)) for r, h in zip(gates, pred_states)]
    pooled = ad.divs(ad.add_n(terms), float(k))
    return ad.tanh(ad.add(ad.matmul(params.cand_input, x_t), pooled))


def attention_pool(params: EncoderDirectionParams, x_t: Tensor,
                   slot_states: list[Tensor], mask, candidate: Tensor
                   ) -> tuple[Tensor, Tensor]:
    """Masked attention over transformed slot states plus the raw candidate.

    ``slot_states`` covers every slot of the padded table (pad slots hold
    zero vectors); ``mask`` flags the real ones. The candidate joins the
    key set untransformed and is always attendable. Returns the pooled
    state and the attention weights over the ``len(slot_states)+1`` keys.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (len(slot_states),):
        raise ShapeError("mask must cover exactly the predecessor slots")
    xq = ad.matmul(params.attn_input, x_t)
    keys = [ad.matmul(params.attn_hidden, h) for h in slot_states]
    keys.append(candidate)
    logits = ad.stack([ad.dot(params.attn_vector, ad.tanh(ad.add(xq, key))) for key in keys])
    full_mask = np.concatenate([mask, [True]])
    alpha = ad.masked_softmax(logits, full_mask)
    pooled = ad.weighted_rows_sum(alpha, ad.stack(keys))
    return pooled, alpha


def _cell(params: EncoderDirectionParams, x_t: Tensor, real_states: list[Tensor],
          slot_states: list[Tensor], mask) -> tuple[Tensor, Tensor]:
    gates = reset_gates(params, x_t, real_states)
    cand = candidate_state(params, x_t, real_states, gates)
    return attention_pool(params, x_t, slot_states, mask, cand)


def encode_direction(params: EncoderDirectionParams, padded: PaddedPredecessors,
                     embeddings: list[Tensor], collect_attention: bool = False):
    """Run the cell over every position of one directional view.

    Positions are visited left-to-right when the table came from the
    forward view and right-to-left for the backward view (predecessor
    positions are larger there); either way each position's predecessors
    are already computed when it is visited. Returns the last visited
    position's state, all per-position states, and (optionally) the
    per-position attention vectors.
    """
    n = len(padded.slots)
    if len(embeddings) != n:
        raise ShapeError("one embedding per position required")
    d = params.hidden_size
    zero_state = Tensor(np.zeros(d))

    order = range(n) if padded.direction == "forward" else range(n - 1, -1, -1)

    states: list[Tensor | None] = [None] * n
    alphas: list[Tensor] = [None] * n if collect_attention else None

    for t in order:
        slot_states = [zero_state if p == VIRTUAL else states[p] for p in padded.slots[t]]
        real_states = [s for s, keep in zip(slot_states, padded.mask[t]) if keep]
        h_t, alpha = _cell(params, embeddings[t], real_states, slot_states, padded.mask[t])
        states[t] = h_t
        if collect_attention:
            alphas[t] = alpha

    last = states[order[-1]]
    if collect_attention:
        return last, states, alphas
    return last, states


def encode_bidirectional(fwd_params: EncoderDirectionParams,
                         bwd_params: EncoderDirectionParams,
                         fwd_padded: PaddedPredecessors,
                         bwd_padded: PaddedPredecessors,
                         embeddings: list[Tensor]) -> Tensor:
    """Concatenate the two directional final states into one history vector."""
    fwd_last, _ = encode_direction(fwd_params, fwd_padded, embeddings)
    bwd_last, _ = encode_direction(bwd_params, bwd_padded, embeddings)
    return ad.concat([fwd_last, bwd_last])
