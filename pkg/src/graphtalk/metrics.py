"""Corpus BLEU and entity F1, matching the classic evaluation scripts.

BLEU follows the Moses ``multi-bleu`` definition: corpus-level modified
1..4-gram precisions, geometric mean, brevity penalty, no smoothing
(any zero n-gram precision zeroes the score). Entity F1 is
micro-averaged over per-response entity multisets.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .errors import DataError

__all__ = ["EvalReport", "corpus_bleu", "entity_f1", "per_domain_f1"]


@dataclass
class EvalReport:
    bleu: float                      # 0..100
    entity_f1: float                 # 0..1
    per_domain: dict[str, float] = field(default_factory=dict)
    copy_failure_rate: float = 0.0
    duplicate_entity_rate: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.bleu <= 100.0):
            raise DataError(f"BLEU out of range: {self.bleu}")
        for name, v in [("entity_f1", self.entity_f1),
                        ("copy_failure_rate", self.copy_failure_rate),
                        ("duplicate_entity_rate", self.duplicate_entity_rate)]:
            if not (0.0 <= v <= 1.0):
                raise DataError(f"{name} out of range: {v}")

    def to_dict(self) -> dict:
        return {
            "bleu": self.bleu,
            "entity_f1": self.entity_f1,
            "per_domain_f1": dict(sorted(self.per_domain.items())),
            "copy_failure_rate": self.copy_failure_rate,
            "duplicate_entity_rate": self.duplicate_entity_rate,
        }

    def summary(self) -> str:
        lines = [f"BLEU            {self.bleu:.2f}",
                 f"Entity F1       {self.entity_f1:.4f}"]
        for dom in sorted(self.per_domain):
            lines.append(f"  {dom + ' F1':<14}{self.per_domain[dom]:.4f}")
        lines.append(f"copy failures   {self.copy_failure_rate:.4f}")
        lines.append(f"duplicate ents  {self.duplicate_entity_rate:.4f}")
        return "\n".join(lines)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: list[list[str]], references: list[list[str]]) -> float:
    """Corpus BLEU in [0, 100], multi-bleu semantics (single reference)."""
    if not hypotheses:
        raise DataError("BLEU needs a non-empty corpus")
    if len(hypotheses) != len(references):
        raise DataError(
            f"hypothesis/reference count mismatch: {len(hypotheses)} vs {len(references)}")

    matches = [0] * 4
    totals = [0] * 4
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp = [str(t) for t in hyp]
        ref = [str(t) for t in ref]
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, 5):
            hgrams = _ngrams(hyp, n)
            if not hgrams:
                continue
            rgrams = _ngrams(ref, n)
            totals[n - 1] += sum(hgrams.values())
            matches[n - 1] += sum(min(c, rgrams[g]) for g, c in hgrams.items())

    if hyp_len == 0:
        return 0.0
    precisions = [(matches[i] / totals[i]) if totals[i] > 0 else 0.0 for i in range(4)]
    if any(p == 0.0 for p in precisions):
        return 0.0
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / 4.0)


def _micro_counts(predicted: list[list[str]], gold: list[list[str]]) -> tuple[int, int, int]:
    tp = 0
    pred_total = 0
    gold_total = 0
    for p, g in zip(predicted, gold):
        pc, gc = Counter(p), Counter(g)
        tp += sum((pc & gc).values())
        pred_total += sum(pc.values())
        gold_total += sum(gc.values())
    return tp, pred_total, gold_total


def entity_f1(predicted: list[list[str]], gold: list[list[str]]) -> float:
    """Micro-averaged F1 over per-response entity multisets.

    Entity-free responses contribute nothing; a corpus with no gold and
    no predicted entities scores 1.0 by convention.
    """
    if len(predicted) != len(gold):
        raise DataError("predicted/gold response count mismatch")
    tp, pred_total, gold_total = _micro_counts(predicted, gold)
    precision = tp / pred_total if pred_total else 1.0
    recall = tp / gold_total if gold_total else 1.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def per_domain_f1(predicted: list[list[str]], gold: list[list[str]],
                  domains: list[str], known_domains: set[str] | None = None
                  ) -> dict[str, float]:
    """Entity F1 restricted to each domain's responses."""
    if not (len(predicted) == len(gold) == len(domains)):
        raise DataError("per-domain F1 needs aligned predicted/gold/domain lists")
    known = known_domains if known_domains is not None else set(domains)
    result: dict[str, float] = {}
    for dom in sorted(set(domains)):
        if dom not in known:
            raise DataError(f"unknown domain label: {dom!r}")
        idx = [i for i, d in enumerate(domains) if d == dom]
        result[dom] = entity_f1([predicted[i] for i in idx], [gold[i] for i in idx])
    return result
