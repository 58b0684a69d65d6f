"""Order-free row encoder.

Each column vector is ``tanh(W_e [cell_emb; attr_emb] + b_e)``; the decoder's
initial state is the element-wise mean of the column vectors, so swapping
columns leaves it unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import Tensor
from .model import Model
from .table_data import UNK_A, TableRow


@dataclass
class EncodedRow:
    row: TableRow
    column_states: list[Tensor]
    states: Tensor  # (N, hidden) stacked column_states
    initial_state: Tensor
    words: list[str]
    attribute_ids: list[int]
    origins: list[int]


def attribute_id(attribute: str, model: Model) -> int:
    return model.attr_vocab.stoi.get(attribute, model.attr_vocab.stoi[UNK_A])


def attribute_lookup(attribute: str, model: Model) -> Tensor:
    """Embedding of ``attribute``; unseen attributes share the ``<unk_a>`` row."""
    return ad.take(model["attr_embedding"], attribute_id(attribute, model))


def encode_row(row: TableRow, model: Model) -> EncodedRow:
    if len(row) == 0:
        raise ad.DomainError("cannot encode a row with no columns")
    vocab = model.vocab
    W, b = model["enc_W"], model["enc_b"]
    column_states = []
    attr_ids = []
    for col in row.columns:
        e_c = ad.take(model["cell_embedding"], vocab.id(col.word))
        a_id = attribute_id(col.attribute, model)
        e_a = ad.take(model["attr_embedding"], a_id)
        column_states.append(ad.tanh(ad.add(ad.matmul(ad.concat([e_c, e_a]), W), b)))
        attr_ids.append(a_id)
    return EncodedRow(
        row=row,
        column_states=column_states,
        states=ad.stack(column_states),
        initial_state=ad.mean_columns(column_states),
        words=row.words,
        attribute_ids=attr_ids,
        origins=[c.origin for c in row.columns],
    )
