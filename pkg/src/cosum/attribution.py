"""Backward inference: attribute a summary to the source words it used.

A separate model, with its own encoder weights, scores every source word
for "was this word used by the given summary". Because it conditions only
on the raw texts, it accepts arbitrary summaries, including ones a person
wrote or edited by hand; it never reads the forward model's weights or
decoder state.

Per source word x_i: attention weights over the summary words give a
context c_i as their weighted sum, and the usage probability is
sigma(W2 tanh(W1 [x_i, c_i] + b1) + b2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cosum.autodiff import ContractViolation, Ref, Tape, Tensor
from cosum.params import ParamStore, load_checkpoint, save_checkpoint
from cosum.rng import Prng
from cosum.textproc import BOS, Document, Vocab

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class AttributionConfig:
    vocab_size: int
    embed_dim: int
    hidden_dim: int

    def __post_init__(self):
        if min(self.vocab_size, self.embed_dim, self.hidden_dim) < 1:
            raise ContractViolation("all dimensions must be >= 1")


@dataclass
class CoverageReport:
    usage_probs: list[float]
    covered_words: list[int]
    covered_sentences: list[int]
    threshold: float
    empty_summary: bool = False

    def to_json(self) -> dict:
        return {
            "usage_probs": list(self.usage_probs),
            "covered_words": list(self.covered_words),
            "covered_sentences": list(self.covered_sentences),
            "threshold": self.threshold,
            "empty_summary": self.empty_summary,
        }


_ATTR_SHAPES = (
    ("embed", lambda c: (c.vocab_size, c.embed_dim)),
    ("ctx.wx", lambda c: (3 * c.hidden_dim, c.embed_dim)),
    ("ctx.wh", lambda c: (3 * c.hidden_dim, c.hidden_dim)),
    ("ctx.bx", lambda c: (3 * c.hidden_dim,)),
    ("ctx.bh", lambda c: (3 * c.hidden_dim,)),
    ("ctx.res", lambda c: (c.hidden_dim, c.embed_dim)),
    ("w1", lambda c: (c.hidden_dim, 2 * c.hidden_dim)),
    ("w2", lambda c: (1, c.hidden_dim)),
    ("b1", lambda c: (c.hidden_dim,)),
    ("b2", lambda c: ()),
)


def _init(prng: Prng, shape, name: str) -> Tensor:
    if name in ("b1", "b2") or name.endswith((".bx", ".bh")):
        return Tensor(np.zeros(shape))
    if name == "embed":
        # Large enough that same-word dot products peak the usage attention
        # at initialization; softer inits strand training in a flat basin.
        scale = 0.5
    elif name == "ctx.res":
        # Start near identity passthrough so same-word matches exist at init.
        base = np.zeros(shape)
        for i in range(min(shape)):
            base[i, i] = 1.0
        noise = np.array([prng.gauss() for _ in range(int(np.prod(shape)))])
        return Tensor(base + 0.01 * noise.reshape(shape))
    else:
        scale = 1.0 / np.sqrt(shape[-1])
    draws = np.array([prng.gauss() for _ in range(int(np.prod(shape)) if shape else 1)])
    return Tensor(draws.reshape(shape) * scale)


class AttributionModel:
    """Usage model p(word used | source, summary) with spec-fixed head shapes."""

    def __init__(self, config: AttributionConfig, store: ParamStore):
        for name, shape_fn in _ATTR_SHAPES:
            expected = shape_fn(config)
            if name not in store or store.get(name).shape != expected:
                raise ContractViolation(f"parameter {name!r} missing or misshaped")
        self.config = config
        self.store = store

    @classmethod
    def create(cls, config: AttributionConfig, seed: int = 0) -> "AttributionModel":
        prng = Prng(seed)
        store = ParamStore()
        for name, shape_fn in _ATTR_SHAPES:
            store.add(name, _init(prng, shape_fn(config), name))
        return cls(config, store)

    def bind(self, tape: Tape) -> "BoundAttributionModel":
        return BoundAttributionModel(self, tape)

    # Value-level wrappers for the per-word operations.
    def contextualize(self, token_ids: list[int]) -> np.ndarray:
        tape = Tape()
        return self.bind(tape).contextualize(token_ids).value

    def usage_probs(self, source_ids: list[int], summary_ids: list[int]) -> np.ndarray:
        tape = Tape()
        return self.bind(tape).usage_probs(source_ids, summary_ids).value

    def save(self, path, vocab: Vocab, extra_config: dict | None = None) -> None:
        config = {
            "kind": "attribution",
            "embed_dim": self.config.embed_dim,
            "hidden_dim": self.config.hidden_dim,
            "vocab": vocab.to_config(),
        }
        if extra_config:
            config.update(extra_config)
        save_checkpoint(path, self.store, config)

    @classmethod
    def load(cls, path) -> tuple["AttributionModel", Vocab]:
        store, config = load_checkpoint(path)
        if config.get("kind") != "attribution":
            raise ContractViolation(f"{path}: not an attribution checkpoint")
        vocab = Vocab.from_config(config["vocab"])
        return (
            cls(
                AttributionConfig(
                    vocab_size=len(vocab),
                    embed_dim=config["embed_dim"],
                    hidden_dim=config["hidden_dim"],
                ),
                store,
            ),
            vocab,
        )


class BoundAttributionModel:
    def __init__(self, model: AttributionModel, tape: Tape):
        self.model = model
        self.config = model.config
        self.tape = tape
        self.p = {name: tape.param(model.store, name) for name, _ in _ATTR_SHAPES}

    def contextualize(self, token_ids: list[int]) -> Ref:
        """Contextual vectors for either the source or the summary side.

        Recurrent pass with a residual projection of the raw embeddings:
        word identity must survive contextualization, otherwise the
        attention between the two sides cannot align repeated words.
        """
        if not token_ids:
            raise ContractViolation("contextualize requires at least one token")
        bad = [i for i in token_ids if i < 0 or i >= self.config.vocab_size]
        if bad:
            raise ContractViolation(f"token id {bad[0]} out of vocabulary")
        t = self.tape
        embedded = t.lookup(self.p["embed"], token_ids)
        h0 = t.const(np.zeros(self.config.hidden_dim))
        recurrent = t.gru_sequence(
            embedded, h0, self.p["ctx.wx"], self.p["ctx.wh"],
            self.p["ctx.bx"], self.p["ctx.bh"],
        )
        residual = t.matmul(embedded, t.transpose(self.p["ctx.res"]))
        return t.add(recurrent, residual)

    def usage_probs(self, source_ids: list[int], summary_ids: list[int]) -> Ref:
        """Usage probability per source word, whole document at once."""
        t = self.tape
        x = self.contextualize(source_ids)                 # [n, H]
        y = self.contextualize(summary_ids)                # [m, H]
        scores = t.matmul(x, t.transpose(y))               # [n, m]
        attn = t.softmax(scores, axis=-1)                  # rows sum to 1
        contexts = t.matmul(attn, y)                       # [n, H]
        joined = t.concat([x, contexts], axis=1)           # [n, 2H]
        hidden = t.tanh(
            t.add_rowvec(t.matmul(joined, t.transpose(self.p["w1"])), self.p["b1"])
        )                                                  # [n, H]
        logits = t.add(
            t.reshape(t.matmul(hidden, t.transpose(self.p["w2"])), (len(source_ids),)),
            self.p["b2"],
        )
        return t.sigmoid(logits)


def usage_attention(x_vec: np.ndarray, summary_vectors: np.ndarray) -> np.ndarray:
    """Attention weights of one source word over the summary words."""
    summary_vectors = np.asarray(summary_vectors, dtype=np.float64)
    if summary_vectors.ndim != 2 or summary_vectors.shape[0] < 1:
        raise ContractViolation("summary_vectors must be [m, d] with m >= 1")
    scores = summary_vectors @ np.asarray(x_vec, dtype=np.float64)
    shifted = scores - scores.max()
    e = np.exp(shifted)
    return e / e.sum()


def context_vector(weights: np.ndarray, summary_vectors: np.ndarray) -> np.ndarray:
    """Attention-weighted sum of summary vectors."""
    weights = np.asarray(weights, dtype=np.float64)
    summary_vectors = np.asarray(summary_vectors, dtype=np.float64)
    if weights.shape[0] != summary_vectors.shape[0]:
        raise ContractViolation("one weight per summary vector required")
    return weights @ summary_vectors


def usage_prob(
    x_vec: np.ndarray,
    context: np.ndarray,
    w1: np.ndarray,
    w2: np.ndarray,
    b1: np.ndarray,
    b2: float,
) -> float:
    """sigma(W2 tanh(W1 [x, c] + b1) + b2) for a single source word."""
    joined = np.concatenate([np.asarray(x_vec), np.asarray(context)])
    hidden = np.tanh(np.asarray(w1) @ joined + np.asarray(b1))
    logit = float((np.asarray(w2) @ hidden)[0]) + float(b2)
    if logit >= 0:
        return 1.0 / (1.0 + float(np.exp(-logit)))
    e = float(np.exp(logit))
    return e / (1.0 + e)


def attribute(
    model: AttributionModel,
    vocab: Vocab,
    document: Document,
    summary_tokens: list[str],
    threshold: float = DEFAULT_THRESHOLD,
) -> CoverageReport:
    """Coverage of the document by an arbitrary summary (user-written allowed)."""
    if not document.tokens:
        raise ContractViolation("document must be non-empty")
    source_ids = vocab.encode_tokens(document.tokens)
    empty = len(summary_tokens) == 0
    summary_ids = [BOS] if empty else vocab.encode_tokens(summary_tokens)

    probs = model.usage_probs(source_ids, summary_ids)
    covered_words = [i for i, p in enumerate(probs) if p >= threshold]
    covered_set = set(covered_words)
    covered_sentences = [
        s
        for s, (start, stop) in enumerate(document.sentence_spans)
        if any(i in covered_set for i in range(start, stop))
    ]
    return CoverageReport(
        usage_probs=[float(p) for p in probs],
        covered_words=covered_words,
        covered_sentences=covered_sentences,
        threshold=threshold,
        empty_summary=empty,
    )
