"""BLEU-4, evaluation runs, unseen-attribute buckets and attention export."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import decoder as dec
from .autodiff import DomainError
from .io_utils import atomic_open
from .model import Model
from .table_data import CAPTION, Instance, schema_attributes

BUCKETS = ("0", "1", "2", ">=3")
MAX_ORDER = 4


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_statistics(hyp: Sequence[str], ref: Sequence[str]) -> list[int]:
    """``[len(hyp), len(ref), match_1, total_1, ..., match_4, total_4]``."""
    stats = [len(hyp), len(ref)]
    for n in range(1, MAX_ORDER + 1):
        h, r = _ngrams(hyp, n), _ngrams(ref, n)
        stats.append(sum(min(c, r[g]) for g, c in h.items()))
        stats.append(max(len(hyp) - n + 1, 0))
    return stats


def _ref_totals(refs) -> list[int]:
    return [sum(max(len(r) - n + 1, 0) for r in refs) for n in range(1, MAX_ORDER + 1)]


def bleu4(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]]) -> float:
    """Corpus BLEU-4 with one reference per hypothesis, no smoothing.

    Orders for which neither hypotheses nor references contain any n-gram
    (all sentences shorter than n) are left out of the geometric mean;
    otherwise any zero precision gives a score of 0.
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    if not hypotheses:
        raise DomainError("BLEU of an empty corpus")
    totals = np.zeros(2 + 2 * MAX_ORDER, dtype=np.int64)
    for h, r in zip(hypotheses, references):
        totals += bleu_statistics(h, r)
    hyp_len, ref_len = int(totals[0]), int(totals[1])
    if hyp_len == 0:
        return 0.0
    ref_totals = _ref_totals(references)
    log_p = []
    for n in range(MAX_ORDER):
        match, total = int(totals[2 + 2 * n]), int(totals[3 + 2 * n])
        if total == 0 and ref_totals[n] == 0:
            continue
        if match == 0:
            return 0.0
        log_p.append(math.log(match / total))
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(sum(log_p) / len(log_p))


def sentence_bleu(hyp: Sequence[str], ref: Sequence[str], smooth: bool = True) -> float:
    """Sentence BLEU-4, add-one smoothed for n > 1; a diagnostic only."""
    if not smooth:
        return bleu4([hyp], [ref])
    if not hyp:
        return 0.0
    s = bleu_statistics(hyp, ref)
    log_p = 0.0
    for n in range(MAX_ORDER):
        match, total = s[2 + 2 * n], s[3 + 2 * n]
        if n == 0:
            if match == 0:
                return 0.0
            log_p += math.log(match / total)
        else:
            log_p += math.log((match + 1) / (total + 1))
    bp = 1.0 if len(hyp) > len(ref) else math.exp(1.0 - len(ref) / len(hyp))
    return bp * math.exp(log_p / MAX_ORDER)


class System(Protocol):
    fallbacks: int

    def generate(self, inst: Instance) -> list[str]: ...

    def known_attributes(self) -> set[str]: ...


class NeuralSystem:
    """Decodes with a trained model (beam search, or greedy when ``beam=1``)."""

    def __init__(self, model: Model, beam: int = 5, max_len: int = 40):
        self.model = model
        self.beam = beam
        self.max_len = max_len
        self.fallbacks = 0

    def generate(self, inst: Instance) -> list[str]:
        return dec.decode(inst.row, self.model, self.beam, self.max_len).words

    def known_attributes(self) -> set[str]:
        return {w for w in self.model.attr_vocab.itos if w not in self.model.attr_vocab.specials}


def unseen_attribute_count(inst: Instance, known: set[str]) -> int:
    return sum(1 for a in set(schema_attributes(inst)) if a not in known)


def bucket_of(count: int) -> str:
    return BUCKETS[min(count, 3)]


@dataclass
class EvalReport:
    bleu: float
    size: int
    bucket_bleu: dict = field(default_factory=dict)
    bucket_counts: dict = field(default_factory=dict)
    fallbacks: int = 0
    system: str = ""
    hypotheses: list = field(default_factory=list, repr=False)

    def to_dict(self, include_outputs: bool = False) -> dict:
        d = asdict(self)
        if not include_outputs:
            d.pop("hypotheses")
        return d


REPORT_SCHEMA = {
    "type": "object",
    "required": ["bleu", "size", "bucket_bleu", "bucket_counts", "fallbacks", "system"],
    "properties": {
        "bleu": {"type": "number", "minimum": 0, "maximum": 1},
        "size": {"type": "integer", "minimum": 0},
        "bucket_bleu": {
            "type": "object",
            "properties": {b: {"type": ["number", "null"]} for b in BUCKETS},
            "required": list(BUCKETS),
        },
        "bucket_counts": {
            "type": "object",
            "properties": {b: {"type": "integer", "minimum": 0} for b in BUCKETS},
            "required": list(BUCKETS),
        },
        "fallbacks": {"type": "integer", "minimum": 0},
        "system": {"type": "string"},
        "hypotheses": {"type": "array"},
    },
}


def evaluate(system: System, instances: Sequence[Instance], name: str = "") -> EvalReport:
    known = system.known_attributes()
    hyps = [system.generate(inst) for inst in instances]
    refs = [list(inst.reference) for inst in instances]
    groups: dict[str, list[int]] = {b: [] for b in BUCKETS}
    for i, inst in enumerate(instances):
        groups[bucket_of(unseen_attribute_count(inst, known))].append(i)
    bucket_bleu = {
        b: (bleu4([hyps[i] for i in idx], [refs[i] for i in idx]) if idx else None)
        for b, idx in groups.items()
    }
    return EvalReport(
        bleu=bleu4(hyps, refs) if instances else 0.0,
        size=len(instances),
        bucket_bleu=bucket_bleu,
        bucket_counts={b: len(idx) for b, idx in groups.items()},
        fallbacks=system.fallbacks,
        system=name,
        hypotheses=[" ".join(h) for h in hyps],
    )


def attention_matrix(
    hyp: dec.Hypothesis, memory: dec.Memory, model: Model
) -> tuple[list[str], list[str], list[str], np.ndarray]:
    """Row labels, row kinds, generated tokens and the (states x steps) weights."""
    tokens = [dec.token_word(t, memory, model) for t in hyp.tokens]
    kinds = []
    for i, label in enumerate(memory.labels):
        if memory.is_attribute_state[i]:
            kinds.append("attribute")
        elif label.endswith(f"[{CAPTION}]"):
            kinds.append("caption")
        else:
            kinds.append("cell")
    if hyp.attention and hyp.attention[0].size:
        weights = np.stack(hyp.attention, axis=1)
    else:
        weights = np.zeros((memory.size, 0))
    return list(memory.labels), kinds, tokens, weights


def export_attention(hyp: dec.Hypothesis, memory: dec.Memory, model: Model, path=None) -> str:
    """CSV with one row per attendable state and one column per generated token.

    The first two columns are the state label ``word[attribute]`` (attribute
    states are ``[attribute]``) and its kind: cell, caption or attribute.
    """
    labels, kinds, tokens, weights = attention_matrix(hyp, memory, model)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["state", "kind"] + tokens)
    for i, (label, kind) in enumerate(zip(labels, kinds)):
        writer.writerow([label, kind] + [repr(float(x)) for x in weights[i]])
    text = buf.getvalue()
    if path is not None:
        with atomic_open(path) as fh:
            fh.write(text)
    return text


def read_attention_csv(path) -> tuple[list[str], list[str], list[str], np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    tokens = rows[0][2:]
    labels = [r[0] for r in rows[1:]]
    kinds = [r[1] for r in rows[1:]]
    weights = np.array([[float(x) for x in r[2:]] for r in rows[1:]]).reshape(len(labels), len(tokens))
    return labels, kinds, tokens, weights
