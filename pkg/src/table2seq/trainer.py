"""Teacher-forced NLL training with Adadelta and dev-driven step halving."""

from __future__ import annotations

import contextlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from . import decoder as dec
from .autodiff import Tensor
from .checkpoint import save_checkpoint
from .evaluation import bleu4
from .io_utils import atomic_open
from .model import Model, ModelConfig
from .table_data import Instance, build_attribute_vocab, build_vocab

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    vocab_limit: int = 20000
    batch_size: int = 1
    max_epochs: int = 50
    rho: float = 0.95
    eps: float = 1e-6
    clip_norm: float = 5.0
    patience: int = 6
    beam: int = 5
    max_len: int = 40
    seed: int = 1
    # stop as soon as dev BLEU-4 reaches this value
    target_bleu: float | None = None

    def __post_init__(self):
        for name in ("vocab_limit", "batch_size", "max_epochs", "patience", "beam", "max_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (0 < self.rho < 1) or self.eps <= 0 or self.clip_norm <= 0:
            raise ValueError("rho must lie in (0, 1); eps and clip_norm must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        model = ModelConfig.from_dict(d.pop("model", {}))
        names = {f.name for f in fields(cls)}
        return cls(model=model, **{k: v for k, v in d.items() if k in names})


@dataclass
class LossResult:
    loss: Tensor
    tokens: int
    floored: int


def nll_loss(inst: Instance, model: Model) -> LossResult:
    """Summed ``-log p`` of the reference (plus ``<eos>``) under teacher forcing."""
    memory = dec.prepare(inst.row, model)
    dstate = dec.initial_state(memory, model)
    terms = []
    floored = 0
    for tok in dec.target_ids(inst.reference, memory, model):
        step = dec.decode_step(memory, dstate, model)
        prob = ad.pick(step.p, tok)
        if prob.value < PROB_FLOOR:
            floored += 1
        terms.append(ad.log(prob, floor=PROB_FLOOR))
        dstate, _ = dec.advance(step, tok, memory, model)
    log_likelihood = terms[0]
    for term in terms[1:]:
        log_likelihood = ad.add(log_likelihood, term)
    loss = ad.mul(ad.constant(-1.0), log_likelihood)
    return LossResult(loss, len(terms), floored)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Rescale all gradients together when their global L2 norm exceeds ``max_norm``."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    sq = 0.0
    for g in grads.values():
        sq += float(np.sum(g * g))
    norm = math.sqrt(sq)
    if norm > max_norm:
        factor = max_norm / norm
        grads = {k: g * factor for k, g in grads.items()}
    return grads, norm


class Adadelta:
    """Adadelta with a global multiplier ``scale`` on every update.

    ``scale`` starts at 1 and is the quantity halved by the dev schedule.
    """

    def __init__(self, rho: float = 0.95, eps: float = 1e-6, scale: float = 1.0):
        self.rho = rho
        self.eps = eps
        self.scale = scale
        self.sq_grad: dict[str, np.ndarray] = {}
        self.sq_update: dict[str, np.ndarray] = {}

    def deltas(self, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Advance the accumulators and return the updates to add to each parameter."""
        rho, eps = self.rho, self.eps
        out = {}
        for name, g in grads.items():
            eg = self.sq_grad.get(name)
            ed = self.sq_update.get(name)
            if eg is None:
                eg = np.zeros_like(g)
                ed = np.zeros_like(g)
            eg = rho * eg + (1.0 - rho) * g * g
            delta = -self.scale * np.sqrt(ed + eps) / np.sqrt(eg + eps) * g
            ed = rho * ed + (1.0 - rho) * delta * delta
            self.sq_grad[name] = eg
            self.sq_update[name] = ed
            out[name] = delta
        return out

    def step(self, params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> None:
        for name, delta in self.deltas(grads).items():
            params[name].value = params[name].value + delta


def adadelta_update(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: Adadelta) -> None:
    state.step(params, grads)


class PlateauHalving:
    """Halve the optimizer scale after ``patience`` epochs without dev improvement."""

    def __init__(self, patience: int = 6):
        self.patience = patience
        self.best = -math.inf
        self.bad_epochs = 0

    def observe(self, score: float) -> tuple[bool, bool]:
        """Returns ``(improved, halve)``."""
        if score > self.best:
            self.best = score
            self.bad_epochs = 0
            return True, False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.bad_epochs = 0
            return False, True
        return False, False


def instance_gradients(inst: Instance, model: Model) -> tuple[float, dict[str, np.ndarray], int]:
    result = nll_loss(inst, model)
    ad.backward(result.loss)
    grads = {}
    for name, p in model.params.items():
        grads[name] = p.grad if p.grad is not None else np.zeros(p.shape)
        p.grad = None
    return float(result.loss.value), grads, result.floored


def greedy_outputs(model: Model, instances: Sequence[Instance], max_len: int = 40) -> list[list[str]]:
    return [dec.decode(inst.row, model, beam=1, max_len=max_len).words for inst in instances]


def dev_bleu(model: Model, instances: Sequence[Instance], max_len: int = 40) -> float:
    hyps = greedy_outputs(model, instances, max_len)
    return bleu4(hyps, [list(i.reference) for i in instances])


@dataclass
class TrainResult:
    model: Model
    history: list[dict]
    best_dev: float | None
    floored: int = 0


def init_model(train: Sequence[Instance], config: TrainConfig) -> Model:
    return Model(
        config.model,
        build_vocab(train, config.vocab_limit),
        build_attribute_vocab(train),
        seed=config.seed,
    )


def train(
    train_set: Sequence[Instance],
    dev_set: Sequence[Instance],
    config: TrainConfig,
    model: Model | None = None,
    log_path=None,
    checkpoint_path=None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Epoch loop with seeded shuffling, clipping and Adadelta.

    After each epoch the model is greedily decoded on ``dev_set`` and scored
    with BLEU-4; the best-scoring parameters are kept, a tie keeping the later
    ones (and written to ``checkpoint_path`` when given).  ``patience`` epochs without improvement
    halve the Adadelta scale.  An empty dev set disables the schedule and the
    final parameters are kept.
    """
    if not train_set:
        raise ValueError("training set is empty")
    if model is None:
        model = init_model(train_set, config)
    rng = np.random.default_rng(config.seed)
    opt = Adadelta(config.rho, config.eps)
    schedule = PlateauHalving(config.patience)
    history: list[dict] = []
    best_arrays = None
    floored_total = 0
    with contextlib.ExitStack() as stack:
        # the log only appears under its final name once training finishes
        log_fh = stack.enter_context(atomic_open(log_path)) if log_path else None
        for epoch in range(1, config.max_epochs + 1):
            order = rng.permutation(len(train_set))
            epoch_loss = 0.0
            for start in range(0, len(order), config.batch_size):
                batch = order[start : start + config.batch_size]
                summed: dict[str, np.ndarray] = {}
                for idx in batch:
                    loss, grads, floored = instance_gradients(train_set[idx], model)
                    if not math.isfinite(loss):
                        raise TrainingError(f"non-finite loss {loss} on training instance {int(idx)} (epoch {epoch})")
                    floored_total += floored
                    epoch_loss += loss
                    for k, g in grads.items():
                        summed[k] = summed[k] + g if k in summed else g
                mean = {k: g / len(batch) for k, g in summed.items()}
                clipped, _ = clip_gradients(mean, config.clip_norm)
                opt.step(model.params, clipped)
            record = {"epoch": epoch, "train_loss": epoch_loss / len(train_set), "dev_bleu": None, "scale": opt.scale}
            stop = False
            if dev_set:
                score = dev_bleu(model, dev_set, config.max_len)
                record["dev_bleu"] = score
                tied = score == schedule.best
                improved, halve = schedule.observe(score)
                # a tie keeps the later (better-fitted) parameters without resetting patience
                if improved or tied:
                    best_arrays = model.copy_arrays()
                    if checkpoint_path:
                        save_checkpoint(checkpoint_path, model, {"train_config": config.to_dict(), "epoch": epoch})
                if halve:
                    opt.scale *= 0.5
                    logger.info("epoch %d: no dev improvement for %d epochs, scale -> %g", epoch, config.patience, opt.scale)
                stop = config.target_bleu is not None and score >= config.target_bleu
            history.append(record)
            logger.info("epoch %d loss %.6f dev_bleu %s", epoch, record["train_loss"], record["dev_bleu"])
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            if on_epoch:
                on_epoch(record)
            if stop:
                break
    if best_arrays is not None:
        model.load_arrays(best_arrays)
    elif checkpoint_path:
        save_checkpoint(checkpoint_path, model, {"train_config": config.to_dict(), "epoch": len(history)})
    return TrainResult(model, history, schedule.best if dev_set else None, floored_total)


def write_history(path, history: Sequence[dict]) -> None:
    with atomic_open(path) as fh:
        for rec in history:
            fh.write(json.dumps(rec) + "\n")
