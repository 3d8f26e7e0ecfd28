"""Benchmark framework for malware-trace representation learning.

Function-call traces are abstracted into sequences, graphs, and trees;
a family of encoders turns each abstraction into fixed-dimensional
embeddings; clusterers and supervised classifiers score those embeddings
under a seeded, stratified protocol.
"""

from .core import (
    CLS,
    CLS_ID,
    MASK,
    MASK_ID,
    PAD,
    PAD_ID,
    UNK,
    UNK_ID,
    Dataset,
    Embedding,
    Trace,
    Vocabulary,
    build_vocabulary,
    embeddings_to_matrix,
    load_jsonl,
    save_jsonl,
)
from .errors import (
    AugmentError,
    ConfigError,
    InvalidConfig,
    InvalidGrammar,
    InvalidInput,
    InvalidState,
    KernelOverflow,
    ShapeError,
    TraceBenchError,
)

__version__ = "0.1.0"

__all__ = [
    "CLS",
    "CLS_ID",
    "MASK",
    "MASK_ID",
    "PAD",
    "PAD_ID",
    "UNK",
    "UNK_ID",
    "Dataset",
    "Embedding",
    "Trace",
    "Vocabulary",
    "build_vocabulary",
    "embeddings_to_matrix",
    "load_jsonl",
    "save_jsonl",
    "AugmentError",
    "ConfigError",
    "InvalidConfig",
    "InvalidGrammar",
    "InvalidInput",
    "InvalidState",
    "KernelOverflow",
    "ShapeError",
    "TraceBenchError",
    "__version__",
]
