"""Table-aware GRU decoder with coverage attention and a copy gate.

One decoding step, given the previous token ``y``, previous state ``s`` and
previous context ``c_prev``:

* attention  ``alpha = softmax(v . tanh(s W_s + h_i W_h + c_prev W_cov + b))``
* context    ``c = sum_i alpha_i h_i``
* state      ``s' = GRU([emb(y); c], s)``
* features   ``f = [emb(y); s'; c; s_0; l]`` where ``l`` embeds the attribute
  of the column ``y`` came from (``<unk_a>`` otherwise)
* output     ``beta = softmax(W_o tanh(f W_m + b_m) + b_o)``
* gate       ``g = sigmoid(f . w_g + b_g)``
* mixture    ``p(w) = g * sum_{i: word_i = w} alpha_i + (1 - g) * beta(w)``

Token ids live in an extended space per row: the word vocabulary followed by
the row's out-of-vocabulary table words.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import EncodedRow, encode_row
from .model import FIRST_GENERATED_ID, Model
from .table_data import BOS, EOS, UNK_A, TableRow, attribute_surface


@dataclass
class Memory:
    """Attendable states of one encoded row and their copy targets."""

    encoded: EncodedRow
    states: Tensor  # (S, hidden)
    keys: Tensor | None  # states @ att_Wh, precomputed once per row
    words: list[str]
    attribute_ids: list[int]
    labels: list[str]
    is_attribute_state: list[bool]
    state_ids: list[int]
    extra_words: list[str]
    copy_matrix: np.ndarray  # (S, |V| + len(extra_words)), one-hot per state

    @property
    def size(self) -> int:
        return len(self.words)

    def ext_size(self, vocab_size: int) -> int:
        return vocab_size + len(self.extra_words)


@dataclass
class DecoderState:
    t: int
    prev_token: int
    state: Tensor
    prev_context: Tensor
    prev_attr: int
    cumulative: np.ndarray


@dataclass
class DecoderStep:
    t: int
    state: Tensor
    alpha: Tensor | None
    cumulative: np.ndarray
    context: Tensor
    gate: Tensor | None
    beta: Tensor
    p: Tensor


@dataclass
class Hypothesis:
    tokens: list[int]
    logp: float
    words: list[str] = field(default_factory=list)
    attention: list[np.ndarray] = field(default_factory=list)
    sources: list[int | None] = field(default_factory=list)
    finished: bool = False


def extend_attendable(encoded: EncodedRow, model: Model) -> tuple[Tensor, list[str], list[int], list[str]]:
    """Column states followed by one projected attribute state per column."""
    attr_states = ad.add(
        ad.matmul(ad.take(model["attr_embedding"], encoded.attribute_ids), model["attr_state_W"]),
        model["attr_state_b"],
    )
    states = ad.stack(encoded.column_states + [ad.take(attr_states, i) for i in range(len(encoded.words))])
    attrs = [c.attribute for c in encoded.row.columns]
    words = encoded.words + [attribute_surface(a) for a in attrs]
    labels = [f"{w}[{a}]" for w, a in zip(encoded.words, attrs)] + [f"[{a}]" for a in attrs]
    return states, words, encoded.attribute_ids * 2, labels


def build_memory(encoded: EncodedRow, model: Model) -> Memory:
    cfg = model.config
    vocab = model.vocab
    if cfg.plusplus:
        states, words, attr_ids, labels = extend_attendable(encoded, model)
        is_attr = [False] * len(encoded.words) + [True] * len(encoded.words)
    else:
        states = encoded.states
        words = list(encoded.words)
        attr_ids = list(encoded.attribute_ids)
        labels = [f"{c.word}[{c.attribute}]" for c in encoded.row.columns]
        is_attr = [False] * len(words)
    extra: list[str] = []
    state_ids = []
    for w in words:
        if w in vocab:
            state_ids.append(vocab.id(w))
        else:
            if w not in extra:
                extra.append(w)
            state_ids.append(len(vocab) + extra.index(w))
    copy_matrix = np.zeros((len(words), len(vocab) + len(extra)))
    copy_matrix[np.arange(len(words)), state_ids] = 1.0
    keys = ad.matmul(states, model["att_Wh"]) if cfg.use_attention else None
    return Memory(encoded, states, keys, words, attr_ids, labels, is_attr, state_ids, extra, copy_matrix)


def prepare(row: TableRow, model: Model) -> Memory:
    return build_memory(encode_row(row, model), model)


def attention_step(query: Tensor, memory: Memory, prev_context: Tensor, model: Model) -> Tensor:
    """Coverage attention over the memory; ``prev_context`` is last step's attended vector."""
    if memory.size == 0:
        raise ad.DomainError("no attendable states")
    keys = memory.keys if memory.keys is not None else ad.matmul(memory.states, model["att_Wh"])
    bias = ad.add(
        ad.add(ad.matmul(query, model["att_Ws"]), ad.matmul(prev_context, model["att_Wcov"])),
        model["att_b"],
    )
    scores = ad.matmul(ad.tanh(ad.add(keys, bias)), model["att_v"])
    return ad.softmax(scores)


def context(alpha: Tensor, states: Tensor) -> Tensor:
    if alpha.shape[0] != states.shape[0]:
        raise ad.ShapeError(f"context: {alpha.shape[0]} weights for {states.shape[0]} states")
    return ad.matmul(alpha, states)


def gru_step(prev_embedding: Tensor, prev_state: Tensor, ctx: Tensor, model: Model) -> Tensor:
    x = ad.concat([prev_embedding, ctx])
    z = ad.sigmoid(ad.add(ad.add(ad.matmul(x, model["gru_Wz"]), ad.matmul(prev_state, model["gru_Uz"])), model["gru_bz"]))
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(x, model["gru_Wr"]), ad.matmul(prev_state, model["gru_Ur"])), model["gru_br"]))
    cand = ad.tanh(
        ad.add(
            ad.add(ad.matmul(x, model["gru_Wh"]), ad.matmul(ad.mul(r, prev_state), model["gru_Uh"])),
            model["gru_bh"],
        )
    )
    # s' = s + z * (cand - s)
    return ad.add(prev_state, ad.mul(z, ad.sub(cand, prev_state)))


def output_features(
    prev_embedding: Tensor, state: Tensor, ctx: Tensor, initial_state: Tensor, local: Tensor, model: Model
) -> Tensor:
    cfg = model.config
    glob = initial_state if cfg.use_global else ad.constant(np.zeros(cfg.hidden_dim))
    loc = local if cfg.use_local else ad.constant(np.zeros(cfg.attr_dim))
    return ad.concat([prev_embedding, state, ctx, glob, loc])


def generate_distribution(features: Tensor, model: Model) -> Tensor:
    """Softmax over the generatable vocabulary (every id from ``<eos>`` on)."""
    hidden = ad.tanh(ad.add(ad.matmul(features, model["out_Wm"]), model["out_bm"]))
    return ad.softmax(ad.add(ad.matmul(hidden, model["out_Wo"]), model["out_bo"]))


def copy_gate(features: Tensor, model: Model) -> Tensor:
    """Scalar gate in (0, 1); shape ``(1,)``."""
    return ad.sigmoid(ad.add(ad.matmul(features, model["gate_w"]), model["gate_b"]))


def mixture_distribution(gate: Tensor | None, alpha: Tensor | None, beta: Tensor, memory: Memory | None, vocab_size: int) -> Tensor:
    """Joint distribution over the extended id space.

    With ``gate`` None (copying off) the result is ``beta`` placed over the
    word vocabulary only.
    """
    lead = ad.constant(np.zeros(FIRST_GENERATED_ID))
    if gate is None:
        return ad.concat([lead, beta])
    extra = memory.ext_size(vocab_size) - vocab_size
    parts = [lead, beta] + ([ad.constant(np.zeros(extra))] if extra else [])
    generated = ad.concat(parts)
    copied = ad.matmul(alpha, ad.constant(memory.copy_matrix))
    return ad.add(ad.mul(ad.sub(ad.constant(np.ones(1)), gate), generated), ad.mul(gate, copied))


def embed_token(token: int, model: Model) -> Tensor:
    vocab = model.vocab
    idx = token if token < len(vocab) else vocab.unk_id
    return ad.take(model["word_embedding"], idx)


def initial_state(memory: Memory, model: Model) -> DecoderState:
    return DecoderState(
        t=1,
        prev_token=model.vocab.stoi[BOS],
        state=memory.encoded.initial_state,
        prev_context=ad.constant(np.zeros(model.config.hidden_dim)),
        prev_attr=model.attr_vocab.stoi[UNK_A],
        cumulative=np.zeros(memory.size),
    )


def decode_step(memory: Memory, dstate: DecoderState, model: Model) -> DecoderStep:
    cfg = model.config
    emb = embed_token(dstate.prev_token, model)
    if cfg.use_attention:
        alpha = attention_step(dstate.state, memory, dstate.prev_context, model)
        ctx = context(alpha, memory.states)
    else:
        alpha = None
        ctx = ad.constant(np.zeros(cfg.hidden_dim))
    state = gru_step(emb, dstate.state, ctx, model)
    local = ad.take(model["attr_embedding"], dstate.prev_attr)
    feats = output_features(emb, state, ctx, memory.encoded.initial_state, local, model)
    beta = generate_distribution(feats, model)
    gate = copy_gate(feats, model) if cfg.copy and alpha is not None else None
    p = mixture_distribution(gate, alpha, beta, memory, len(model.vocab))
    cumulative = dstate.cumulative + (alpha.value if alpha is not None else 0.0)
    return DecoderStep(dstate.t, state, alpha, cumulative, ctx, gate, beta, p)


def resolve_source(token: int, alpha: np.ndarray | None, memory: Memory) -> int | None:
    """Index of the state a token came from: highest-attention matching state."""
    matches = [i for i, sid in enumerate(memory.state_ids) if sid == token]
    if not matches:
        return None
    if alpha is None:
        return matches[0]
    return max(matches, key=lambda i: (alpha[i], -i))


def advance(step: DecoderStep, token: int, memory: Memory, model: Model) -> tuple[DecoderState, int | None]:
    alpha = step.alpha.value if step.alpha is not None else None
    src = resolve_source(token, alpha, memory)
    attr = memory.attribute_ids[src] if src is not None else model.attr_vocab.stoi[UNK_A]
    nxt = DecoderState(step.t + 1, token, step.state, step.context, attr, step.cumulative)
    return nxt, src


def token_word(token: int, memory: Memory, model: Model) -> str:
    vocab = model.vocab
    if token < len(vocab):
        return vocab.word(token)
    return memory.extra_words[token - len(vocab)]


def target_ids(reference, memory: Memory, model: Model) -> list[int]:
    """Supervision ids for a reference; ``<eos>`` appended.

    Out-of-vocabulary words that occur in the row map to their copy id when
    copying is on; everything else unknown maps to ``<unk>``.
    """
    vocab = model.vocab
    ids = []
    for w in reference:
        if w in vocab:
            ids.append(vocab.id(w))
        elif model.config.copy and w in memory.extra_words:
            ids.append(len(vocab) + memory.extra_words.index(w))
        else:
            ids.append(vocab.unk_id)
    ids.append(vocab.stoi[EOS])
    return ids


def reference_log_probs(reference, memory: Memory, model: Model) -> list[float]:
    """Per-token log-probabilities of a forced reference (inference mode)."""
    out = []
    with ad.no_grad():
        dstate = initial_state(memory, model)
        for tok in target_ids(reference, memory, model):
            step = decode_step(memory, dstate, model)
            out.append(float(np.log(step.p.value[tok])))
            dstate, _ = advance(step, tok, memory, model)
    return out


def _finish(h: Hypothesis, memory: Memory, model: Model) -> Hypothesis:
    eos = model.vocab.stoi[EOS]
    body = h.tokens[:-1] if h.tokens and h.tokens[-1] == eos else h.tokens
    h.words = [token_word(t, memory, model) for t in body]
    return h


def greedy_decode(memory: Memory, model: Model, max_len: int = 40) -> Hypothesis:
    eos = model.vocab.stoi[EOS]
    with ad.no_grad():
        dstate = initial_state(memory, model)
        hyp = Hypothesis([], 0.0)
        for _ in range(max_len):
            step = decode_step(memory, dstate, model)
            p = step.p.value
            tok = int(np.argmax(p))
            hyp.tokens.append(tok)
            hyp.logp += float(np.log(p[tok]))
            hyp.attention.append(step.alpha.value.copy() if step.alpha is not None else np.zeros(0))
            dstate, src = advance(step, tok, memory, model)
            hyp.sources.append(src)
            if tok == eos:
                hyp.finished = True
                break
    return _finish(hyp, memory, model)


def beam_search(memory: Memory, model: Model, beam: int = 5, max_len: int = 40) -> list[Hypothesis]:
    """Length-bounded beam search ranked by total log-probability.

    Each step keeps the best ``beam - len(finished)`` expansions; those ending
    in ``<eos>`` move to the finished list.  Hypotheses still open after
    ``max_len`` steps are returned unfinished.  With ``beam=1`` this is
    greedy decoding.
    """
    if beam < 1 or max_len < 1:
        raise ValueError("beam and max_len must be >= 1")
    eos = model.vocab.stoi[EOS]
    finished: list[Hypothesis] = []
    with ad.no_grad():
        live = [(Hypothesis([], 0.0), initial_state(memory, model))]
        for _ in range(max_len):
            candidates = []
            for order, (hyp, dstate) in enumerate(live):
                step = decode_step(memory, dstate, model)
                with np.errstate(divide="ignore"):
                    logp = np.log(step.p.value)
                for tok in range(FIRST_GENERATED_ID, len(logp)):
                    if np.isfinite(logp[tok]):
                        candidates.append((hyp.logp + float(logp[tok]), order, tok, hyp, step))
            candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
            slots = beam - len(finished)
            live = []
            for score, _, tok, hyp, step in candidates[:slots]:
                nxt, src = advance(step, tok, memory, model)
                attn = step.alpha.value.copy() if step.alpha is not None else np.zeros(0)
                h = Hypothesis(hyp.tokens + [tok], score, attention=hyp.attention + [attn], sources=hyp.sources + [src])
                if tok == eos:
                    h.finished = True
                    finished.append(h)
                else:
                    live.append((h, nxt))
            if not live:
                break
        finished.extend(h for h, _ in live)
    finished.sort(key=lambda h: -h.logp)
    return [_finish(h, memory, model) for h in finished[:beam]]


def decode(row: TableRow, model: Model, beam: int = 5, max_len: int = 40) -> Hypothesis:
    with ad.no_grad():
        memory = prepare(row, model)
    if beam == 1:
        return greedy_decode(memory, model, max_len)
    return beam_search(memory, model, beam, max_len)[0]
