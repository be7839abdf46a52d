"""Prediction and hook networks: GRU encoder/decoder with gated copy attention.

The decoder mixes a vocabulary distribution with a distribution over source
positions through a learned generate/copy switch. Copying is gated per
source word by an "effective" copyability value: a position whose effective
value is exactly zero (user deselection, or a hard zero tag) is structurally
excluded from the copy softmax, so it can never receive copy mass. Values
strictly between zero and one enter the copy scores additively in log space,
which keeps the gate differentiable.

Copied tokens land on their vocabulary ids (UNK when absent), so the output
distribution lives over the vocabulary; whether mass arrived via copying is
recorded separately for tracing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from cosum.autodiff import ContractViolation, Ref, Tape, Tensor
from cosum.params import ParamStore, load_checkpoint, save_checkpoint
from cosum.rng import Prng
from cosum.textproc import UNK, Vocab

_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int
    hidden_dim: int
    max_summary_sentences: int = 3
    max_tokens_per_sentence: int = 20

    def __post_init__(self):
        if min(self.vocab_size, self.embed_dim, self.hidden_dim) < 1:
            raise ContractViolation("all model dimensions must be >= 1")
        if self.max_summary_sentences < 1 or self.max_tokens_per_sentence < 1:
            raise ContractViolation("summary limits must be >= 1")


@dataclass
class EncoderOutput:
    states: Ref          # [n, hidden_dim]
    final: Ref           # [hidden_dim]
    token_ids: list[int]

    @property
    def n(self) -> int:
        return len(self.token_ids)

    @property
    def states_value(self) -> np.ndarray:
        return self.states.value

    @property
    def final_value(self) -> np.ndarray:
        return self.final.value


@dataclass(frozen=True)
class HookState:
    """Per-word copyability: model probabilities plus user prior overrides."""

    model_probs: np.ndarray           # [n], each in [0, 1]
    forced_zero: frozenset[int]       # positions whose prior is FORCED_ZERO
    effective: np.ndarray             # [n]; exactly 0.0 at forced positions

    @property
    def prior(self) -> list[str]:
        return [
            "FORCED_ZERO" if i in self.forced_zero else "FREE"
            for i in range(len(self.model_probs))
        ]


def apply_prior(model_probs: np.ndarray, deselected_positions) -> HookState:
    """Force the copy gate to exactly zero at the deselected positions."""
    probs = np.asarray(model_probs, dtype=np.float64)
    forced = frozenset(int(i) for i in deselected_positions)
    for i in forced:
        if i < 0 or i >= probs.shape[0]:
            raise ContractViolation(f"deselected position {i} out of range")
    mask = np.ones_like(probs)
    for i in forced:
        mask[i] = 0.0
    return HookState(model_probs=probs, forced_zero=forced, effective=probs * mask)


@dataclass
class DecoderStepOutput:
    attention: Ref       # [n] distribution over source positions
    copy_dist: Ref       # [n]; exactly 0 where effective is 0; zeros if no support
    gen_dist: Ref        # [vocab_size]
    copy_vocab: Ref      # [vocab_size]; copy mass accumulated onto token ids
    switch: Ref          # scalar p_gen
    output_dist: Ref     # [vocab_size]
    state: Ref           # [hidden_dim] next decoder state
    empty_support: bool

    @property
    def attention_value(self) -> np.ndarray:
        return self.attention.value

    @property
    def output_value(self) -> np.ndarray:
        return self.output_dist.value


_PARAM_SHAPES = (
    ("embed", lambda c: (c.vocab_size, c.embed_dim)),
    ("enc.wx", lambda c: (3 * c.hidden_dim, c.embed_dim)),
    ("enc.wh", lambda c: (3 * c.hidden_dim, c.hidden_dim)),
    ("enc.bx", lambda c: (3 * c.hidden_dim,)),
    ("enc.bh", lambda c: (3 * c.hidden_dim,)),
    ("dec.wx", lambda c: (3 * c.hidden_dim, c.embed_dim)),
    ("dec.wh", lambda c: (3 * c.hidden_dim, c.hidden_dim)),
    ("dec.bx", lambda c: (3 * c.hidden_dim,)),
    ("dec.bh", lambda c: (3 * c.hidden_dim,)),
    ("attn.proj", lambda c: (c.hidden_dim, c.hidden_dim)),
    ("switch.w", lambda c: (2 * c.hidden_dim,)),
    ("switch.b", lambda c: ()),
    ("out.w", lambda c: (c.vocab_size, 2 * c.hidden_dim)),
    ("out.b", lambda c: (c.vocab_size,)),
    ("hook.w", lambda c: (c.hidden_dim,)),
    ("hook.b", lambda c: ()),
)


def _init_param(prng: Prng, shape: tuple[int, ...], name: str) -> Tensor:
    if name.endswith((".bx", ".bh", ".b")) or name == "switch.b" or name == "hook.b":
        return Tensor(np.zeros(shape))
    if name == "embed":
        scale = 0.1
    else:
        fan_in = shape[-1] if shape else 1
        scale = 1.0 / np.sqrt(fan_in)
    draws = np.array(
        [prng.gauss() for _ in range(int(np.prod(shape)) if shape else 1)]
    )
    return Tensor(draws.reshape(shape) * scale)


class CopyGatedSeq2Seq:
    """Forward model: prediction network plus hook network over one ParamStore."""

    def __init__(self, config: ModelConfig, store: ParamStore):
        for name, shape_fn in _PARAM_SHAPES:
            expected = shape_fn(config)
            if name not in store or store.get(name).shape != expected:
                raise ContractViolation(f"parameter {name!r} missing or misshaped")
        self.config = config
        self.store = store

    @classmethod
    def create(cls, config: ModelConfig, seed: int = 0) -> "CopyGatedSeq2Seq":
        prng = Prng(seed)
        store = ParamStore()
        for name, shape_fn in _PARAM_SHAPES:
            store.add(name, _init_param(prng, shape_fn(config), name))
        return cls(config, store)

    def bind(self, tape: Tape) -> "BoundForwardModel":
        return BoundForwardModel(self, tape)

    # Value-level wrappers: each runs on a private tape.
    def encode(self, token_ids: list[int]) -> EncoderOutput:
        return self.bind(Tape()).encode(token_ids)

    def hook_forward(self, encoder_output: EncoderOutput) -> np.ndarray:
        bound = BoundForwardModel(self, encoder_output.states.tape)
        return bound.hook_probs(encoder_output).value

    def decode_step(
        self,
        encoder_output: EncoderOutput,
        hook_state: HookState,
        prev_token_id: int,
        prev_state: np.ndarray | None = None,
    ) -> DecoderStepOutput:
        tape = encoder_output.states.tape
        bound = BoundForwardModel(self, tape)
        effective = tape.const(hook_state.effective)
        state = (
            encoder_output.final
            if prev_state is None
            else tape.const(np.asarray(prev_state, dtype=np.float64))
        )
        return bound.decode_step(encoder_output, effective, prev_token_id, state)

    def save(self, path, vocab: Vocab, extra_config: dict | None = None) -> None:
        config = {
            "kind": "forward",
            "embed_dim": self.config.embed_dim,
            "hidden_dim": self.config.hidden_dim,
            "max_summary_sentences": self.config.max_summary_sentences,
            "max_tokens_per_sentence": self.config.max_tokens_per_sentence,
            "vocab": vocab.to_config(),
        }
        if extra_config:
            config.update(extra_config)
        save_checkpoint(path, self.store, config)

    @classmethod
    def load(cls, path) -> tuple["CopyGatedSeq2Seq", Vocab]:
        store, config = load_checkpoint(path)
        if config.get("kind") != "forward":
            raise ContractViolation(f"{path}: not a forward-model checkpoint")
        vocab = Vocab.from_config(config["vocab"])
        model_config = ModelConfig(
            vocab_size=len(vocab),
            embed_dim=config["embed_dim"],
            hidden_dim=config["hidden_dim"],
            max_summary_sentences=config["max_summary_sentences"],
            max_tokens_per_sentence=config["max_tokens_per_sentence"],
        )
        return cls(model_config, store), vocab


class BoundForwardModel:
    """Model parameters bound onto one tape; all forward math lives here."""

    def __init__(self, model: CopyGatedSeq2Seq, tape: Tape):
        self.model = model
        self.config = model.config
        self.tape = tape
        self.p = {name: tape.param(model.store, name) for name, _ in _PARAM_SHAPES}

    def embed_token(self, token_id: int) -> Ref:
        t = self.tape
        row = t.lookup(self.p["embed"], [token_id])
        return t.reshape(row, (self.config.embed_dim,))

    def encode(self, token_ids: list[int]) -> EncoderOutput:
        if not token_ids:
            raise ContractViolation("encode requires at least one token")
        bad = [i for i in token_ids if i < 0 or i >= self.config.vocab_size]
        if bad:
            raise ContractViolation(f"token id {bad[0]} out of vocabulary")
        t = self.tape
        embedded = t.lookup(self.p["embed"], token_ids)
        h0 = t.const(np.zeros(self.config.hidden_dim))
        states = t.gru_sequence(
            embedded, h0, self.p["enc.wx"], self.p["enc.wh"],
            self.p["enc.bx"], self.p["enc.bh"],
        )
        last = t.slice(states, len(token_ids) - 1, len(token_ids))
        final = t.reshape(last, (self.config.hidden_dim,))
        return EncoderOutput(states=states, final=final, token_ids=list(token_ids))

    def hook_probs(self, enc: EncoderOutput) -> Ref:
        t = self.tape
        logits = t.add(t.matmul(enc.states, self.p["hook.w"]), self.p["hook.b"])
        return t.sigmoid(logits)

    def decode_step(
        self,
        enc: EncoderOutput,
        effective: Ref,
        prev_token_id: int,
        prev_state: Ref,
    ) -> DecoderStepOutput:
        t = self.tape
        n = enc.n
        if effective.value.shape != (n,):
            raise ContractViolation(
                f"hook state length {effective.value.shape} != source length {n}"
            )

        x = self.embed_token(prev_token_id)
        state = t.gru_step(
            x, prev_state, self.p["dec.wx"], self.p["dec.wh"],
            self.p["dec.bx"], self.p["dec.bh"],
        )

        query = t.matmul(self.p["attn.proj"], state)
        scores = t.matmul(enc.states, query)
        attention = t.softmax(scores)
        context = t.matmul(attention, enc.states)
        state_context = t.concat([state, context])

        gen_logits = t.add(t.matmul(self.p["out.w"], state_context), self.p["out.b"])
        gen_dist = t.softmax(gen_logits)

        excluded = effective.value == 0.0
        if bool(excluded.all()):
            # No copyable position left: pure generation, switch pinned to 1.
            zeros_n = t.const(np.zeros(n))
            return DecoderStepOutput(
                attention=attention,
                copy_dist=zeros_n,
                gen_dist=gen_dist,
                copy_vocab=t.const(np.zeros(self.config.vocab_size)),
                switch=t.const(np.asarray(1.0)),
                output_dist=gen_dist,
                state=state,
                empty_support=True,
            )

        log_gate = t.log(t.clamp_min(effective, _LOG_FLOOR))
        copy_scores = t.add(scores, log_gate)
        copy_dist = t.masked_softmax(copy_scores, excluded)
        copy_vocab = t.scatter_add(copy_dist, enc.token_ids, self.config.vocab_size)

        switch_logit = t.add(
            t.matmul(
                t.reshape(self.p["switch.w"], (1, 2 * self.config.hidden_dim)),
                state_context,
            ),
            self.p["switch.b"],
        )
        switch = t.reshape(t.sigmoid(switch_logit), ())

        gen_part = t.mul(gen_dist, switch)
        copy_part = t.mul(copy_vocab, t.affine(switch, -1.0, 1.0))
        output_dist = t.add(gen_part, copy_part)

        return DecoderStepOutput(
            attention=attention,
            copy_dist=copy_dist,
            gen_dist=gen_dist,
            copy_vocab=copy_vocab,
            switch=switch,
            output_dist=output_dist,
            state=state,
            empty_support=False,
        )


def copy_source_position(
    step: DecoderStepOutput, token_id: int, src_token_ids: list[int]
) -> int | None:
    """Best source position that contributed copy mass for token_id, if any.

    A token "arrived via copy" when the copy side of the mixture put more
    mass on it than the generation side did; the position reported is the
    strongest copy-distribution entry among positions holding that token.
    """
    if step.empty_support:
        return None
    p_gen = float(step.switch.value)
    copy_mass = (1.0 - p_gen) * float(step.copy_vocab.value[token_id])
    gen_mass = p_gen * float(step.gen_dist.value[token_id])
    if copy_mass <= gen_mass or copy_mass == 0.0:
        return None
    copy = step.copy_dist.value
    best, best_mass = None, 0.0
    for pos, src_id in enumerate(src_token_ids):
        if src_id == token_id and copy[pos] > best_mass:
            best, best_mass = pos, copy[pos]
    return best


def vocab_ids_for_source(vocab: Vocab, tokens: list[str]) -> list[int]:
    """Vocabulary ids for source tokens; absent tokens map to UNK."""
    return [vocab.token_to_id.get(tok, UNK) for tok in tokens]
