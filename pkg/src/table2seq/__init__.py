"""Table-to-text generation: encode one table row, decode a sentence."""

from .model import Model, ModelConfig
from .table_data import Instance, RawTable, TableRow, Vocabulary, load_jsonl, normalize_row

__all__ = ["Model", "ModelConfig", "Instance", "RawTable", "TableRow", "Vocabulary", "load_jsonl", "normalize_row"]
__version__ = "0.1.0"
