"""graphtalk: graph-encoder dialogue modeling with KB copy decoding."""

__version__ = "0.1.0"

from .config import RunConfig
from .data import Dialogue, Ontology, TrainingExample, Turn
from .estimator import DialogueResponder
from .metrics import EvalReport, corpus_bleu, entity_f1
from .model import DialogueModel

__all__ = [
    "__version__",
    "RunConfig",
    "Dialogue",
    "Ontology",
    "TrainingExample",
    "Turn",
    "DialogueResponder",
    "DialogueModel",
    "EvalReport",
    "corpus_bleu",
    "entity_f1",
]
