from .config import (
    LEGAL_MATRIX,
    BenchConfig,
    Cell,
    default_methods,
    load_config,
)
from .report import emit_matrix_report, emit_rankings, export_projection
from .runner import (
    BenchResultStore,
    CellResult,
    load_embeddings_npz,
    run_benchmark,
    save_embeddings_npz,
)

__all__ = [
    "LEGAL_MATRIX",
    "BenchConfig",
    "Cell",
    "default_methods",
    "load_config",
    "emit_matrix_report",
    "emit_rankings",
    "export_projection",
    "BenchResultStore",
    "CellResult",
    "load_embeddings_npz",
    "run_benchmark",
    "save_embeddings_npz",
]
