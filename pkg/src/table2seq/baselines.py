"""Non-copying comparison systems: templates, random copying and TC-NLM."""

from __future__ import annotations

import json
from collections import OrderedDict
from typing import Sequence

import numpy as np

from . import decoder as dec
from .model import Model, ModelConfig
from .table_data import CAPTION, UNK, Instance, TableRow, schema_attributes, tokenize


def slot(attribute: str) -> str:
    return f"<{attribute}>"


def schema_key(inst: Instance) -> tuple[tuple[str, ...], bool]:
    has_caption = bool(inst.caption) or any(c.is_caption for c in inst.row.columns)
    return tuple(schema_attributes(inst)), has_caption


def _cell_candidates(inst: Instance) -> list[tuple[list[str], str]]:
    attrs = schema_attributes(inst)
    cells = inst.cells or tuple(c.word for c in inst.row.columns if not c.is_caption)
    cands = [(tokenize(cell), attr) for attr, cell in zip(attrs, cells) if tokenize(cell)]
    if inst.caption:
        cands.append((tokenize(inst.caption), CAPTION))
    # longest first; stable so earlier columns win ties
    return sorted(cands, key=lambda c: -len(c[0]))


def delexicalize(inst: Instance) -> tuple[str, ...]:
    """Replace cell mentions in the reference with attribute slots, longest match first."""
    cands = _cell_candidates(inst)
    ref = list(inst.reference)
    out = []
    i = 0
    while i < len(ref):
        for toks, attr in cands:
            if ref[i : i + len(toks)] == toks:
                out.append(slot(attr))
                i += len(toks)
                break
        else:
            out.append(ref[i])
            i += 1
    return tuple(out)


class TemplateStore:
    """Per-schema templates ranked by frequency (ties keep first-seen order)."""

    def __init__(self):
        self.templates: dict[tuple, OrderedDict] = {}
        self.fallbacks = 0

    @classmethod
    def induce(cls, instances: Sequence[Instance]) -> "TemplateStore":
        store = cls()
        for inst in instances:
            bucket = store.templates.setdefault(schema_key(inst), OrderedDict())
            tpl = delexicalize(inst)
            bucket[tpl] = bucket.get(tpl, 0) + 1
        return store

    def ranked(self, key) -> list[tuple[tuple[str, ...], int]]:
        bucket = self.templates.get(key, {})
        items = list(bucket.items())
        # sorted() is stable, so equal counts stay in insertion order
        return sorted(items, key=lambda kv: -kv[1])

    def generate(self, inst: Instance) -> tuple[list[str], bool]:
        """Fill the most frequent template of the row's schema.

        Returns the tokens and whether the unseen-schema fallback (cells in
        column order) was used.
        """
        key = schema_key(inst)
        ranked = self.ranked(key)
        attrs = schema_attributes(inst)
        cells = list(inst.cells) or [c.word for c in inst.row.columns if not c.is_caption]
        if not ranked:
            return [w for cell in cells for w in tokenize(cell)], True
        values = {slot(a): tokenize(c) for a, c in zip(attrs, cells)}
        if inst.caption:
            values[slot(CAPTION)] = tokenize(inst.caption)
        out = []
        for tok in ranked[0][0]:
            out.extend(values.get(tok, [tok]))
        return out, False

    def known_attributes(self) -> set[str]:
        return {a for attrs, _ in self.templates for a in attrs} | {CAPTION}

    def to_json(self) -> str:
        data = [
            {
                "attributes": list(key[0]),
                "caption": key[1],
                "templates": [{"tokens": list(t), "freq": f} for t, f in self.ranked(key)],
            }
            for key in self.templates
        ]
        return json.dumps(data, ensure_ascii=False, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "TemplateStore":
        store = cls()
        for entry in json.loads(text):
            key = (tuple(entry["attributes"]), bool(entry["caption"]))
            store.templates[key] = OrderedDict((tuple(t["tokens"]), t["freq"]) for t in entry["templates"])
        return store


def template_induce(instances: Sequence[Instance]) -> TemplateStore:
    return TemplateStore.induce(instances)


def template_generate(inst: Instance, store: TemplateStore) -> tuple[list[str], bool]:
    return store.generate(inst)


class TemplateSystem:
    def __init__(self, store: TemplateStore):
        self.store = store
        self.fallbacks = 0

    def generate(self, inst: Instance) -> list[str]:
        tokens, fallback = self.store.generate(inst)
        self.fallbacks += fallback
        return tokens

    def known_attributes(self) -> set[str]:
        return self.store.known_attributes()


def random_copy_postprocess(tokens: Sequence[str], row: TableRow, rng: np.random.Generator | int) -> list[str]:
    """Replace every ``<unk>`` with a uniformly drawn word of the row."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    words = row.words
    if not words:
        return list(tokens)
    return [words[int(rng.integers(len(words)))] if t == UNK else t for t in tokens]


class RandomCopySystem:
    """A copy-free model whose ``<unk>`` outputs are replaced by random row words."""

    def __init__(self, model: Model, beam: int = 5, max_len: int = 40, seed: int = 0):
        if model.config.copy:
            raise ValueError("random-copying post-processes a model trained without copying")
        self.model = model
        self.beam = beam
        self.max_len = max_len
        self.rng = np.random.default_rng(seed)
        self.fallbacks = 0

    def generate(self, inst: Instance) -> list[str]:
        words = dec.decode(inst.row, self.model, self.beam, self.max_len).words
        return random_copy_postprocess(words, inst.row, self.rng)

    def known_attributes(self) -> set[str]:
        v = self.model.attr_vocab
        return {w for w in v.itos if w not in v.specials}


def tc_nlm_config(**kw) -> ModelConfig:
    """Decoder without attention or copying, fed the global and local table factors."""
    return ModelConfig.tc_nlm(**kw)
