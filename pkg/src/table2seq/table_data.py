"""Tables, normalized rows, row/sentence instances and vocabularies.

A row is normalized into word-level columns: every multi-word cell becomes
consecutive one-word columns that share the cell's attribute, and the caption
is appended as extra columns under the virtual attribute ``caption``.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
UNK_A = "<unk_a>"
CAPTION = "caption"

WORD_SPECIALS = (PAD, BOS, EOS, UNK)
ATTRIBUTE_SPECIALS = (PAD, UNK_A)

# annotators were told to write this for rows they could not describe
HARD_TO_ANNOTATE = "it's-hard-to-annotate"


class ValidationError(ValueError):
    """Input data violates the table/instance contract."""


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def attribute_surface(attribute: str) -> str:
    """The single output token an attribute is copied as."""
    return "_".join(attribute.split())


@dataclass(frozen=True)
class RawTable:
    attributes: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    caption: str = ""

    def __post_init__(self):
        n = len(self.attributes)
        for j, row in enumerate(self.rows):
            if len(row) != n:
                raise ValidationError(
                    f"row {j} has {len(row)} cells but the table has {n} attributes"
                )


@dataclass(frozen=True)
class Column:
    word: str
    attribute: str
    origin: int
    is_caption: bool = False


@dataclass(frozen=True)
class TableRow:
    columns: tuple[Column, ...]

    def __len__(self) -> int:
        return len(self.columns)

    @property
    def words(self) -> list[str]:
        return [c.word for c in self.columns]

    @property
    def attributes(self) -> list[str]:
        return [c.attribute for c in self.columns]


@dataclass(frozen=True)
class Instance:
    row: TableRow
    reference: tuple[str, ...]
    # pre-split cell strings, kept for template matching
    attributes: tuple[str, ...] = ()
    cells: tuple[str, ...] = ()
    caption: str = ""

    def __post_init__(self):
        if not self.reference:
            raise ValidationError("reference sentence is empty")
        for tok in self.reference:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValidationError(f"reference token {tok!r} is empty or contains whitespace")


def normalize_row(raw: RawTable, row_index: int, include_caption: bool = True) -> TableRow:
    """Split one table row into one-word columns, caption columns last."""
    if not 0 <= row_index < len(raw.rows):
        raise ValidationError(f"row index {row_index} out of range for {len(raw.rows)} rows")
    columns = []
    for i, (attribute, cell) in enumerate(zip(raw.attributes, raw.rows[row_index])):
        attr = attribute.strip().lower()
        for word in tokenize(cell):
            columns.append(Column(word, attr, i))
    if include_caption:
        n = len(raw.attributes)
        for word in tokenize(raw.caption):
            columns.append(Column(word, CAPTION, n, True))
    if not columns:
        raise ValidationError("row has no non-empty cells")
    return TableRow(tuple(columns))


def make_instance(
    attributes: Sequence[str],
    cells: Sequence[str],
    sentence: Sequence[str] | str,
    caption: str = "",
    include_caption: bool = True,
) -> Instance:
    raw = RawTable(tuple(attributes), (tuple(cells),), caption or "")
    row = normalize_row(raw, 0, include_caption)
    if isinstance(sentence, str):
        reference = tokenize(sentence)
    else:
        reference = [t.lower() for t in sentence]
    return Instance(row, tuple(reference), tuple(attributes), tuple(cells), caption or "")


def instance_to_record(inst: Instance) -> dict:
    return {
        "caption": inst.caption,
        "attributes": list(inst.attributes),
        "cells": list(inst.cells),
        "sentence": list(inst.reference),
    }


def parse_record(obj, include_caption: bool = True) -> Instance:
    if not isinstance(obj, dict):
        raise ValidationError("record is not a JSON object")
    missing = {"attributes", "cells", "sentence"} - obj.keys()
    if missing:
        raise ValidationError(f"missing keys: {sorted(missing)}")
    attributes, cells = obj["attributes"], obj["cells"]
    if not isinstance(attributes, list) or not isinstance(cells, list):
        raise ValidationError("attributes and cells must be lists")
    if len(attributes) != len(cells):
        raise ValidationError(
            f"{len(attributes)} attributes but {len(cells)} cells"
        )
    caption = obj.get("caption") or ""
    return make_instance(attributes, cells, obj["sentence"], caption, include_caption)


def load_jsonl(path, include_caption: bool = True, drop_unannotatable: bool = True) -> list[Instance]:
    """Read instances from a JSON-lines file.

    Raises:
        ValidationError: on a malformed line; the message names the 1-based
            line number.
    """
    instances = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                inst = parse_record(obj, include_caption)
            except (json.JSONDecodeError, ValidationError) as exc:
                raise ValidationError(f"line {lineno}: {exc}") from exc
            if drop_unannotatable and inst.reference == (HARD_TO_ANNOTATE,):
                continue
            instances.append(inst)
    return instances


def load_rows(path, include_caption: bool = True) -> list[TableRow]:
    """Rows only, one per non-blank line; the ``sentence`` key is optional."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict) or not isinstance(obj.get("attributes"), list) or not isinstance(obj.get("cells"), list):
                    raise ValidationError("record needs list-valued attributes and cells")
                raw = RawTable(tuple(obj["attributes"]), (tuple(obj["cells"]),), obj.get("caption") or "")
                rows.append(normalize_row(raw, 0, include_caption))
            except (json.JSONDecodeError, ValidationError) as exc:
                raise ValidationError(f"line {lineno}: {exc}") from exc
    return rows


def write_jsonl(path, instances: Iterable[Instance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_record(inst), ensure_ascii=False) + "\n")


def convert_triple(subject: str, predicate: str, obj: str) -> RawTable:
    """A knowledge-base fact as a one-row table: ``[subject, predicate]`` -> ``[subject, object]``."""
    for name, value in (("subject", subject), ("predicate", predicate), ("object", obj)):
        if not value or not value.strip():
            raise ValidationError(f"empty {name} in triple")
    return RawTable(("subject", predicate.strip()), ((subject.strip(), obj.strip()),), "")


def parse_triples_tsv(lines: Iterable[str]) -> Iterable[dict]:
    """Yield canonical JSONL records from ``subject\\tpredicate\\tobject\\tquestion`` lines."""
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ValidationError(f"line {lineno}: expected 4 tab-separated fields, got {len(fields)}")
        subject, predicate, obj, question = fields
        try:
            table = convert_triple(subject, predicate, obj)
            sentence = tokenize(question)
            if not sentence:
                raise ValidationError("empty question")
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc
        yield {
            "caption": "",
            "attributes": list(table.attributes),
            "cells": list(table.rows[0]),
            "sentence": sentence,
        }


class Vocabulary:
    """Dense word <-> id map with reserved tokens first."""

    def __init__(self, words: Iterable[str], specials: Sequence[str] = WORD_SPECIALS):
        self.specials = tuple(specials)
        self.itos: list[str] = list(self.specials)
        self.stoi: dict[str, int] = {w: i for i, w in enumerate(self.itos)}
        for w in words:
            if w not in self.stoi:
                self.stoi[w] = len(self.itos)
                self.itos.append(w)
        self.unk_id = self.stoi.get(UNK, self.stoi.get(UNK_A, 0))

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, word: str) -> bool:
        return word in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos and self.specials == other.specials

    def id(self, word: str) -> int:
        return self.stoi.get(word, self.unk_id)

    def word(self, idx: int) -> str:
        return self.itos[idx]

    def to_dict(self) -> dict:
        return {"specials": list(self.specials), "words": self.itos[len(self.specials):]}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(d["words"], d["specials"])


def _ranked(counts: Counter, limit: int | None) -> list[str]:
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if limit is not None:
        ranked = ranked[:limit]
    return [w for w, _ in ranked]


def build_vocab(instances: Sequence[Instance], limit: int = 20000) -> Vocabulary:
    """Top-``limit`` words over references and table words; ties go lexicographically."""
    if limit < 1:
        raise ValueError("vocabulary limit must be >= 1")
    counts: Counter = Counter()
    for inst in instances:
        counts.update(inst.reference)
        for col in inst.row.columns:
            counts[col.word] += 1
            if not col.is_caption:
                counts[attribute_surface(col.attribute)] += 1
    for special in WORD_SPECIALS:
        counts.pop(special, None)
    return Vocabulary(_ranked(counts, limit), WORD_SPECIALS)


def build_attribute_vocab(instances: Sequence[Instance]) -> Vocabulary:
    """Every attribute seen in training, plus the virtual ``caption`` attribute."""
    counts: Counter = Counter()
    for inst in instances:
        counts.update(inst.row.attributes)
    counts[CAPTION] += 0
    return Vocabulary(_ranked(counts, None), ATTRIBUTE_SPECIALS)


def schema_attributes(inst: Instance) -> list[str]:
    if inst.attributes:
        return [a.strip().lower() for a in inst.attributes]
    seen: dict[str, None] = {}
    for col in inst.row.columns:
        if not col.is_caption:
            seen.setdefault(col.attribute, None)
    return list(seen)


@dataclass
class CorpusStats:
    tables: int
    sentences: int
    avg_words_per_sentence: float
    min_words_per_sentence: int
    max_words_per_sentence: int
    avg_words_per_caption: float
    min_words_per_caption: int
    max_words_per_caption: int
    avg_cells_per_sentence: float
    min_cells_per_sentence: int
    max_cells_per_sentence: int
    avg_columns_per_table: float
    min_columns_per_table: int
    max_columns_per_table: int
    avg_rows_per_table: float
    min_rows_per_table: int
    max_rows_per_table: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.pop("extra")
        d.update(self.extra)
        return d


def _summary(values: Sequence[float]) -> tuple[float, int, int]:
    if not values:
        return 0.0, 0, 0
    return sum(values) / len(values), min(values), max(values)


def corpus_stats(instances: Sequence[Instance]) -> CorpusStats:
    """Corpus statistics in the shape of the dataset table of the table-to-text literature.

    Instances carry one row each, so a "table" is identified by its
    (caption, attributes) pair and the rows-per-table count is the number of
    distinct rows observed under that key.  A cell counts as used by a
    sentence when all of its words occur in the reference.
    """
    if not instances:
        raise ValueError("corpus_stats of an empty instance list")
    tables: dict[tuple, set] = {}
    sentence_lengths, caption_lengths, cells_used = [], [], []
    for inst in instances:
        key = (inst.caption, tuple(schema_attributes(inst)))
        tables.setdefault(key, set()).add(tuple(inst.cells) or tuple(inst.row.words))
        sentence_lengths.append(len(inst.reference))
        cap = tokenize(inst.caption) if inst.caption else [c.word for c in inst.row.columns if c.is_caption]
        if cap:
            caption_lengths.append(len(cap))
        ref = set(inst.reference)
        cells = inst.cells or tuple(inst.row.words)
        cells_used.append(sum(1 for c in cells if tokenize(c) and set(tokenize(c)) <= ref))
    columns = [len(k[1]) for k in tables]
    rows = [len(v) for v in tables.values()]
    s = _summary(sentence_lengths)
    c = _summary(caption_lengths)
    u = _summary(cells_used)
    col = _summary(columns)
    r = _summary(rows)
    return CorpusStats(
        tables=len(tables),
        sentences=len(instances),
        avg_words_per_sentence=s[0],
        min_words_per_sentence=s[1],
        max_words_per_sentence=s[2],
        avg_words_per_caption=c[0],
        min_words_per_caption=c[1],
        max_words_per_caption=c[2],
        avg_cells_per_sentence=u[0],
        min_cells_per_sentence=u[1],
        max_cells_per_sentence=u[2],
        avg_columns_per_table=col[0],
        min_columns_per_table=col[1],
        max_columns_per_table=col[2],
        avg_rows_per_table=r[0],
        min_rows_per_table=r[1],
        max_rows_per_table=r[2],
        extra={"avg_sentences_per_table": len(instances) / len(tables)},
    )
