"""Scikit-learn style estimator facade.

:class:`DialogueResponder` wraps vocabulary building, model
construction and the training loop behind the familiar
``fit``/``predict``/``score`` surface (``get_params``/``set_params``
come from ``BaseEstimator``), so the model slots into ecosystem
tooling such as ``sklearn.base.clone`` and ``ParameterGrid`` sweeps.

``X`` is a list of :class:`~graphtalk.data.Dialogue` objects; one
prediction is produced per system turn (the same cut
:func:`~graphtalk.data.make_examples` performs).
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .config import RunConfig
from .data import (Dialogue, Ontology, build_vocab, derive_ontology,
                   entity_lexicon, extract_entities, make_examples)
from .errors import DataError
from .metrics import corpus_bleu
from .model import DialogueModel
from .training import train_model
from .vocab import EntityVocabulary

__all__ = ["DialogueResponder", "check_dialogues"]


def check_dialogues(X) -> list[Dialogue]:
    """Validate an input corpus: a non-empty list of Dialogue objects."""
    if not isinstance(X, (list, tuple)) or not X:
        raise DataError("expected a non-empty list of Dialogue objects")
    for i, d in enumerate(X):
        if not isinstance(d, Dialogue):
            raise DataError(f"item {i} is not a Dialogue (got {type(d).__name__})")
        if not d.turns:
            raise DataError(f"dialogue {d.dialogue_id!r} has no turns")
        for t in d.turns:
            if t.speaker not in ("user", "system"):
                raise DataError(
                    f"dialogue {d.dialogue_id!r} has unknown speaker {t.speaker!r}")
            if not t.tokens:
                raise DataError(f"dialogue {d.dialogue_id!r} contains an empty turn")
    return list(X)


class DialogueResponder(BaseEstimator):
    """Trainable graph-encoder dialogue model with a fit/predict API."""

    def __init__(self, hidden_size=16, embed_size=0, entity_dim=0, hops=3,
                 k_max=4, dropout=0.1, dropout_override=False,
                 learning_rate=1e-3, batch_size=8, epochs=50, seed=13,
                 max_decode_len=24, tie_directions=False,
                 sequential_only=False, query_projection=False):
        self.hidden_size = hidden_size
        self.embed_size = embed_size
        self.entity_dim = entity_dim
        self.hops = hops
        self.k_max = k_max
        self.dropout = dropout
        self.dropout_override = dropout_override
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.max_decode_len = max_decode_len
        self.tie_directions = tie_directions
        self.sequential_only = sequential_only
        self.query_projection = query_projection

    def _make_config(self) -> RunConfig:
        return RunConfig(
            hidden_size=self.hidden_size,
            embed_size=self.embed_size,
            entity_dim=self.entity_dim,
            hops=self.hops,
            k_max=self.k_max,
            dropout=self.dropout,
            dropout_override=self.dropout_override,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            max_decode_len=self.max_decode_len,
            tie_directions=self.tie_directions,
            sequential_only=self.sequential_only,
            query_projection=self.query_projection,
        )

    def fit(self, X, y=None, ontology: Ontology | None = None,
            validation: list[Dialogue] | None = None):
        """Train on a list of dialogues; builds vocabularies first.

        ``ontology`` defaults to one derived from the KBs; ``validation``
        dialogues, when given, drive best-checkpoint selection by BLEU.
        """
        dialogues = check_dialogues(X)
        config = self._make_config()
        self.ontology_ = ontology if ontology is not None else derive_ontology(dialogues)
        examples = make_examples(dialogues, self.ontology_)
        if not examples:
            raise DataError("corpus contains no system turns to learn from")
        self.vocab_ = build_vocab(examples, self.ontology_)
        ent_tokens = [t for d in dialogues for tr in d.kb for t in (tr[0], tr[2])]
        for values in self.ontology_.types.values():
            ent_tokens.extend(values)
        self.entity_vocab_ = EntityVocabulary(ent_tokens)
        self.model_ = DialogueModel(config, self.vocab_, self.entity_vocab_)
        dev = make_examples(check_dialogues(validation), self.ontology_) if validation else None
        result = train_model(self.model_, examples, dev_examples=dev)
        if dev:
            self.model_.load_param_arrays(result.best_params)
        self.train_history_ = result.history
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise DataError("estimator is not fitted; call fit first")

    def predict(self, X) -> list[list[str]]:
        """Greedy surface responses, one per system turn in ``X``."""
        self._require_fitted()
        examples = make_examples(check_dialogues(X), self.ontology_)
        return [self.model_.respond(ex)[1] for ex in examples]

    def predict_sketches(self, X) -> list[list[str]]:
        """Greedy sketch-token responses (tags not yet filled)."""
        self._require_fitted()
        examples = make_examples(check_dialogues(X), self.ontology_)
        return [self.model_.respond(ex)[0] for ex in examples]

    def score(self, X, y=None) -> float:
        """Corpus BLEU (0..100) of greedy responses against gold turns."""
        self._require_fitted()
        examples = make_examples(check_dialogues(X), self.ontology_)
        hyps = [self.model_.respond(ex)[1] for ex in examples]
        refs = [ex.gold_response for ex in examples]
        return corpus_bleu(hyps, refs)

    def entity_f1_score(self, X) -> float:
        """Micro entity F1 of greedy responses against gold turns."""
        from .metrics import entity_f1
        self._require_fitted()
        dialogues = check_dialogues(X)
        examples = make_examples(dialogues, self.ontology_)
        lexicon = entity_lexicon(dialogues, self.ontology_)
        hyps = [extract_entities(self.model_.respond(ex)[1], lexicon) for ex in examples]
        refs = [extract_entities(ex.gold_response, lexicon) for ex in examples]
        return entity_f1(hyps, refs)
