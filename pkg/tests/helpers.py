"""Test oracles and tiny fixtures shared across the suite."""

from __future__ import annotations

import itertools

import numpy as np

from table2seq import autodiff as ad
from table2seq import decoder as dec
from table2seq.model import FIRST_GENERATED_ID, Model, ModelConfig
from table2seq.table_data import ATTRIBUTE_SPECIALS, EOS, WORD_SPECIALS, Vocabulary, make_instance


def central_difference(f, array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d f / d array by central differences; ``array`` is perturbed in place and restored."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Elementwise ``|a - n| / max(1, |a|)``, maximised."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))


TOY_WORDS = [
    "the", "scored", "in", "for", "played", "goals", "kelly", "ned",
    "team", "year", "won", "a", "cup", "final", "at", "player",
]  # 16 words + 4 reserved = vocabulary of 20


def toy_model(seed: int = 0, std: float = 0.3, **overrides) -> Model:
    """Shrunken model: embeddings 8, hidden 12, word vocabulary 20."""
    kw = dict(embed_dim=8, attr_dim=8, hidden_dim=12, attention_dim=12, init_std=std)
    kw.update(overrides)
    vocab = Vocabulary(TOY_WORDS, WORD_SPECIALS)
    attrs = Vocabulary(["player", "year", "team", "caption"], ATTRIBUTE_SPECIALS)
    return Model(ModelConfig(**kw), vocab, attrs, seed=seed)


def toy_instance():
    """Two columns, three reference tokens; ``zorba`` is out of vocabulary."""
    return make_instance(["player", "year"], ["zorba", "kelly"], "zorba scored kelly")


def tiny_search_model(seed):
    """One in-vocabulary word plus one copyable table word: four candidate ids."""
    vocab = Vocabulary(["w"], WORD_SPECIALS)
    attrs = Vocabulary(["a"], ATTRIBUTE_SPECIALS)
    cfg = ModelConfig(embed_dim=3, attr_dim=3, hidden_dim=4, attention_dim=4, init_std=1.5)
    model = Model(cfg, vocab, attrs, seed=seed)
    mem = dec.prepare(make_instance(["a"], ["zz"], "zz").row, model)
    return model, mem


def exhaustive_best(model, mem, max_len):
    """Score every sequence over the candidate set by direct forward passes."""
    eos = model.vocab.stoi[EOS]
    candidates = list(range(FIRST_GENERATED_ID, mem.ext_size(len(model.vocab))))
    best = (-np.inf, None)
    for length in range(1, max_len + 1):
        for seq in itertools.product(candidates, repeat=length):
            if eos in seq[:-1]:
                continue
            if length < max_len and seq[-1] != eos:
                continue
            st = dec.initial_state(mem, model)
            total = 0.0
            with ad.no_grad():
                for tok in seq:
                    step = dec.decode_step(mem, st, model)
                    total += float(np.log(step.p.value[tok]))
                    st, _ = dec.advance(step, tok, mem, model)
            if total > best[0]:
                best = (total, list(seq))
    return best


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    """Print and remember one PASS/FAIL line, then fail the test if needed."""
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
