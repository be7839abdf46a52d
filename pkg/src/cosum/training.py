"""Losses, optimizer, and training loops for all three networks.

The prediction network trains with the gold copy tags teacher-forced as the
copy gate (so the intractable sum over tag configurations never appears);
the hook network trains with binary cross-entropy against the same tags;
the usage model trains separately with binary cross-entropy through its
whole attention pipeline. Training is deliberately single-threaded with a
fixed iteration and summation order: one (corpus, config) pair must yield
one checkpoint, byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cosum.attribution import AttributionConfig, AttributionModel, BoundAttributionModel
from cosum.autodiff import ContractViolation, Ref, Tape, Tensor, backward
from cosum.model import BoundForwardModel, CopyGatedSeq2Seq, ModelConfig
from cosum.params import ParamStore
from cosum.rng import Prng
from cosum.textproc import BOS, CorpusExample, Vocab, corpus_vocab

_LOG_FLOOR = 1e-12


class TrainingDiverged(RuntimeError):
    pass


_EPOCH_EVAL_CAP = 64


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 16
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ContractViolation("epochs and batch_size must be positive")
        if self.learning_rate < 0 or self.adam_eps <= 0 or self.grad_clip_norm <= 0:
            raise ContractViolation("rates must be positive")
        for beta in (self.adam_beta1, self.adam_beta2):
            if not 0.0 < beta < 1.0:
                raise ContractViolation("Adam betas must lie in (0, 1)")


@dataclass
class EvalReport:
    token_accuracy: float
    tag_auc: float
    masking_violations: int
    loss_curves: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "token_accuracy": self.token_accuracy,
            "tag_auc": self.tag_auc,
            "masking_violations": self.masking_violations,
            "loss_curves": self.loss_curves,
        }


# ---------------------------------------------------------------------------
# Loss graphs
# ---------------------------------------------------------------------------


def _bce(tape: Tape, probs: Ref, targets: np.ndarray) -> Ref:
    """Mean binary cross-entropy with logs clamped at 1e-12."""
    t_pos = tape.const(targets)
    t_neg = tape.const(1.0 - targets)
    log_p = tape.log(tape.clamp_min(probs, _LOG_FLOOR))
    log_q = tape.log(tape.clamp_min(tape.affine(probs, -1.0, 1.0), _LOG_FLOOR))
    terms = tape.add(tape.mul(t_pos, log_p), tape.mul(t_neg, log_q))
    return tape.affine(tape.mean(terms), -1.0, 0.0)


def _prediction_nll(
    tape: Tape,
    bound: BoundForwardModel,
    enc,
    effective: Ref,
    summary_ids: list[int],
) -> Ref:
    """Mean NLL of the gold summary under teacher forcing."""
    state = enc.final
    prev = BOS
    picked: list[Ref] = []
    for target in summary_ids:
        step = bound.decode_step(enc, effective, prev, state)
        prob = tape.gather(step.output_dist, [target])
        picked.append(tape.log(tape.clamp_min(prob, _LOG_FLOOR)))
        state = step.state
        prev = target
    stacked = picked[0] if len(picked) == 1 else tape.concat(picked)
    return tape.affine(tape.mean(stacked), -1.0, 0.0)


def _forward_losses(
    model: CopyGatedSeq2Seq, vocab: Vocab, example: CorpusExample
) -> tuple[Tape, Ref, Ref, Ref]:
    """One tape holding both forward-model losses (shared encoder pass)."""
    tape = Tape()
    bound = model.bind(tape)
    src_ids = vocab.encode_tokens(example.document.tokens)
    summary_ids = vocab.encode_tokens(example.summary_tokens)
    enc = bound.encode(src_ids)
    gold = np.asarray(example.gold_tags, dtype=np.float64)
    effective = tape.const(gold)
    nll = _prediction_nll(tape, bound, enc, effective, summary_ids)
    hook = _bce(tape, bound.hook_probs(enc), gold)
    return tape, nll, hook, tape.add(nll, hook)


def loss_prediction(
    model: CopyGatedSeq2Seq, vocab: Vocab, example: CorpusExample
) -> float:
    _, nll, _, _ = _forward_losses(model, vocab, example)
    return float(nll.value)


def loss_hook(model: CopyGatedSeq2Seq, vocab: Vocab, example: CorpusExample) -> float:
    _, _, hook, _ = _forward_losses(model, vocab, example)
    return float(hook.value)


def _attribution_loss(
    model: AttributionModel, vocab: Vocab, example: CorpusExample
) -> tuple[Tape, Ref]:
    tape = Tape()
    bound = model.bind(tape)
    src_ids = vocab.encode_tokens(example.document.tokens)
    summary_ids = vocab.encode_tokens(example.summary_tokens) or [BOS]
    probs = bound.usage_probs(src_ids, summary_ids)
    gold = np.asarray(example.gold_tags, dtype=np.float64)
    return tape, _bce(tape, probs, gold)


def loss_backward_model(
    model: AttributionModel, vocab: Vocab, example: CorpusExample
) -> float:
    _, loss = _attribution_loss(model, vocab, example)
    return float(loss.value)


# Builders with the (store) -> (tape, loss) shape that grad_check expects.


def prediction_loss_builder(config: ModelConfig, vocab: Vocab, example: CorpusExample):
    def build(store: ParamStore):
        model = CopyGatedSeq2Seq(config, store)
        tape, nll, _, _ = _forward_losses(model, vocab, example)
        return tape, nll

    return build


def hook_loss_builder(config: ModelConfig, vocab: Vocab, example: CorpusExample):
    def build(store: ParamStore):
        model = CopyGatedSeq2Seq(config, store)
        tape = Tape()
        bound = model.bind(tape)
        enc = bound.encode(vocab.encode_tokens(example.document.tokens))
        gold = np.asarray(example.gold_tags, dtype=np.float64)
        return tape, _bce(tape, bound.hook_probs(enc), gold)

    return build


def attribution_loss_builder(
    config: AttributionConfig, vocab: Vocab, example: CorpusExample
):
    def build(store: ParamStore):
        model = AttributionModel(config, store)
        return _attribution_loss(model, vocab, example)

    return build


# ---------------------------------------------------------------------------
# Adam with global-norm clipping
# ---------------------------------------------------------------------------


class Adam:
    def __init__(self, store: ParamStore, config: TrainConfig):
        self.config = config
        self.t = 0
        self.m = {n: np.zeros(store.get(n).shape) for n in store.names()}
        self.v = {n: np.zeros(store.get(n).shape) for n in store.names()}

    def step(self, store: ParamStore) -> None:
        cfg = self.config
        self.t += 1
        total = 0.0
        for name in store.names():
            g = store.grad(name)
            total += float((g * g).sum())
        norm = math.sqrt(total)
        scale = cfg.grad_clip_norm / norm if norm > cfg.grad_clip_norm else 1.0

        bias1 = 1.0 - cfg.adam_beta1**self.t
        bias2 = 1.0 - cfg.adam_beta2**self.t
        for name in store.names():
            g = store.grad(name) * scale
            self.m[name] = cfg.adam_beta1 * self.m[name] + (1 - cfg.adam_beta1) * g
            self.v[name] = cfg.adam_beta2 * self.v[name] + (1 - cfg.adam_beta2) * (g * g)
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            update = cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
            store.set(name, Tensor(store.get(name).data - update))


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


def split_corpus(
    examples: list[CorpusExample],
) -> tuple[list[CorpusExample], list[CorpusExample]]:
    """Deterministic 90/10 split by example index (last tenth held out)."""
    n_train = (len(examples) * 9) // 10
    return examples[:n_train], examples[n_train:]


def _accumulate(
    store: ParamStore, grads_list: list[dict[str, np.ndarray]]
) -> None:
    count = len(grads_list)
    for name in store.names():
        shape = store.get(name).shape
        total = np.zeros(shape)
        for grads in grads_list:
            if name in grads:
                total += grads[name]
        store.set_grad(name, total / count)


@dataclass
class TrainedForward:
    model: CopyGatedSeq2Seq
    history: list[dict]


@dataclass
class TrainedAttribution:
    model: AttributionModel
    history: list[dict]


def train_forward(
    examples: list[CorpusExample],
    vocab: Vocab,
    model_config: ModelConfig,
    config: TrainConfig,
    log_path: str | Path | None = None,
) -> TrainedForward:
    train_set, held_out = split_corpus(examples)
    model = CopyGatedSeq2Seq.create(model_config, seed=config.seed)
    adam = Adam(model.store, config)
    history: list[dict] = []

    for epoch in range(config.epochs):
        order = list(range(len(train_set)))
        Prng(config.seed * 1_000_003 + epoch).shuffle(order)
        sum_nll = 0.0
        sum_hook = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grads_list = []
            for idx in batch:
                tape, nll, hook, total = _forward_losses(model, vocab, train_set[idx])
                value = float(total.value)
                if not math.isfinite(value):
                    raise TrainingDiverged(
                        f"non-finite forward loss at epoch {epoch}, example {idx}"
                    )
                sum_nll += float(nll.value)
                sum_hook += float(hook.value)
                grads_list.append(backward(tape, total))
            _accumulate(model.store, grads_list)
            adam.step(model.store)
        # Per-epoch metric on a fixed held-out slice; final reports use it all.
        probe = held_out[:_EPOCH_EVAL_CAP]
        row = {
            "epoch": epoch,
            "loss_pred": sum_nll / len(order),
            "loss_hook": sum_hook / len(order),
            "loss_backward": None,
            "token_acc": token_accuracy(model, vocab, probe)[0] if probe else None,
            "tag_auc": None,
        }
        history.append(row)
    _write_metrics(log_path, history)
    return TrainedForward(model=model, history=history)


def train_attribution(
    examples: list[CorpusExample],
    vocab: Vocab,
    attr_config: AttributionConfig,
    config: TrainConfig,
    log_path: str | Path | None = None,
) -> TrainedAttribution:
    train_set, held_out = split_corpus(examples)
    model = AttributionModel.create(attr_config, seed=config.seed)
    adam = Adam(model.store, config)
    history: list[dict] = []

    for epoch in range(config.epochs):
        order = list(range(len(train_set)))
        Prng(config.seed * 1_000_003 + epoch).shuffle(order)
        sum_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grads_list = []
            for idx in batch:
                tape, loss = _attribution_loss(model, vocab, train_set[idx])
                value = float(loss.value)
                if not math.isfinite(value):
                    raise TrainingDiverged(
                        f"non-finite attribution loss at epoch {epoch}, example {idx}"
                    )
                sum_loss += value
                grads_list.append(backward(tape, loss))
            _accumulate(model.store, grads_list)
            adam.step(model.store)
        probe = held_out[:_EPOCH_EVAL_CAP]
        row = {
            "epoch": epoch,
            "loss_pred": None,
            "loss_hook": None,
            "loss_backward": sum_loss / len(order),
            "token_acc": None,
            "tag_auc": tag_auc(model, vocab, probe) if probe else None,
        }
        history.append(row)
    _write_metrics(log_path, history)
    return TrainedAttribution(model=model, history=history)


def _write_metrics(log_path, history: list[dict]) -> None:
    if log_path is None:
        return
    with open(log_path, "a", encoding="utf-8", newline="\n") as fh:
        for row in history:
            fh.write(json.dumps(row) + "\n")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def token_accuracy(
    model: CopyGatedSeq2Seq, vocab: Vocab, examples: list[CorpusExample]
) -> tuple[float, int]:
    """Teacher-forced next-token accuracy plus copy-mask violation count."""
    correct = 0
    total = 0
    violations = 0
    for example in examples:
        tape = Tape()
        bound = model.bind(tape)
        enc = bound.encode(vocab.encode_tokens(example.document.tokens))
        gold = np.asarray(example.gold_tags, dtype=np.float64)
        effective = tape.const(gold)
        forced = gold == 0.0
        state = enc.final
        prev = BOS
        for target in vocab.encode_tokens(example.summary_tokens):
            step = bound.decode_step(enc, effective, prev, state)
            if int(np.argmax(step.output_dist.value)) == target:
                correct += 1
            if not step.empty_support and np.any(step.copy_dist.value[forced] != 0.0):
                violations += 1
            total += 1
            state = step.state
            prev = target
    return (correct / total if total else 0.0), violations


def tag_auc(
    model: AttributionModel, vocab: Vocab, examples: list[CorpusExample]
) -> float:
    scores: list[float] = []
    labels: list[int] = []
    for example in examples:
        src = vocab.encode_tokens(example.document.tokens)
        summ = vocab.encode_tokens(example.summary_tokens) or [BOS]
        probs = model.usage_probs(src, summ)
        scores.extend(float(p) for p in probs)
        labels.extend(example.gold_tags)
    return auc_trapezoidal(np.asarray(scores), np.asarray(labels))


def auc_trapezoidal(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC area by trapezoidal sweep over all thresholds (ties grouped)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = int((labels == 1).sum())
    neg = int((labels == 0).sum())
    if pos == 0 or neg == 0:
        return 0.5
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    area = 0.0
    tp = fp = 0
    prev_tp = prev_fp = 0
    i = 0
    n = len(sorted_scores)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        tp += int((sorted_labels[i:j] == 1).sum())
        fp += int((sorted_labels[i:j] == 0).sum())
        area += (fp - prev_fp) * (tp + prev_tp) / 2.0
        prev_tp, prev_fp = tp, fp
        i = j
    return area / (pos * neg)


def evaluate(
    model: CopyGatedSeq2Seq,
    attribution_model: AttributionModel | None,
    vocab: Vocab,
    held_out: list[CorpusExample],
    loss_curves: list[dict] | None = None,
) -> EvalReport:
    accuracy, violations = token_accuracy(model, vocab, held_out)
    auc = (
        tag_auc(attribution_model, vocab, held_out)
        if attribution_model is not None
        else 0.5
    )
    return EvalReport(
        token_accuracy=accuracy,
        tag_auc=auc,
        masking_violations=violations,
        loss_curves=list(loss_curves or []),
    )
