"""regionqar: distill region-grounded question/answer/rationale corpora
from an instruction-following LLM, filter them with a trained critic, and
export augmented training data.
"""

from .records import (
    AnnotatorRating,
    BoxGeometry,
    BundleCardinality,
    CriticLabel,
    CriticScore,
    ImageRecord,
    QarInstance,
    ReferenceMode,
    Region,
    ValidationError,
    VerbalizationBundle,
    validate_qar,
)
from .store import CorpusStore

__version__ = "0.1.0"

__all__ = [
    "AnnotatorRating",
    "BoxGeometry",
    "BundleCardinality",
    "CorpusStore",
    "CriticLabel",
    "CriticScore",
    "ImageRecord",
    "QarInstance",
    "ReferenceMode",
    "Region",
    "ValidationError",
    "VerbalizationBundle",
    "validate_qar",
    "__version__",
]
