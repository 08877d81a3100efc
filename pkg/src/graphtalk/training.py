"""Training loop with validation-BLEU checkpoint selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import backward
from .data import TrainingExample, make_batches
from .metrics import corpus_bleu
from .model import DialogueModel
from .optim import AdamState, adam_step

__all__ = ["TrainingResult", "train_model", "evaluate_bleu"]


@dataclass
class TrainingResult:
    history: list[dict] = field(default_factory=list)
    best_params: dict | None = None
    best_epoch: int = 0
    best_bleu: float = float("-inf")


def evaluate_bleu(model: DialogueModel, examples: list[TrainingExample]) -> float:
    hyps = [model.respond(ex)[1] for ex in examples]
    refs = [ex.gold_response for ex in examples]
    return corpus_bleu(hyps, refs)


def train_model(model: DialogueModel, examples: list[TrainingExample],
                dev_examples: list[TrainingExample] | None = None,
                log_fn=None, stop_fn=None) -> TrainingResult:
    """Adam epochs over seed-shuffled batches.

    After each epoch the model is scored on ``dev_examples`` (corpus
    BLEU, greedy decoding) and the best-scoring parameter snapshot is
    kept; without a dev set the final parameters win. ``stop_fn``, when
    given, sees the epoch log entry and may end training early (used by
    overfitting runs that stop at a target). With ``epochs == 0`` the
    initialized parameters are returned untouched.
    """
    cfg = model.config
    result = TrainingResult()
    adam = AdamState(model.store, learning_rate=cfg.learning_rate)
    dropout_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xD50]))

    for epoch in range(1, cfg.epochs + 1):
        batches = make_batches(examples, cfg.batch_size, cfg.seed + epoch, model.vocab)
        total = 0.0
        for batch in batches:
            loss = model.batch_loss(batch, rng=dropout_rng if cfg.dropout > 0 else None)
            backward(loss)
            adam_step(model.store, adam)
            total += loss.item()
        entry = {"epoch": epoch, "train_loss": total / max(1, len(batches))}
        if dev_examples:
            bleu = evaluate_bleu(model, dev_examples)
            entry["val_bleu"] = bleu
            if bleu > result.best_bleu:
                result.best_bleu = bleu
                result.best_epoch = epoch
                result.best_params = model.param_arrays()
        result.history.append(entry)
        if log_fn:
            log_fn(entry)
        if stop_fn and stop_fn(entry):
            break

    if result.best_params is None:
        result.best_params = model.param_arrays()
        result.best_epoch = len(result.history)
    return result
