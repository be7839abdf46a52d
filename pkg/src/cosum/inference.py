"""Forward inference: constrained decoding plus exact small-latent inference.

Three generation modes drive the collaborative loop: start a fresh summary
with a requested number of sentences, append one sentence conditioned on
the summary so far, or complete a sentence the user has started typing
(the typed prefix is teacher-forced, so the result always begins with it
verbatim). Search is greedy by default; a plain log-probability beam is
available and must coincide with greedy at width one.

For latent spaces small enough to enumerate, marginals and posteriors are
computed exactly; the two-position lever model is the worked example.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from cosum.autodiff import ContractViolation, Tape
from cosum.model import (
    BoundForwardModel,
    CopyGatedSeq2Seq,
    DecoderStepOutput,
    EncoderOutput,
    apply_prior,
    copy_source_position,
)
from cosum.textproc import BOS, Document, Vocab


class GenerationMode(str, Enum):
    INIT_WITH = "init_with"
    ADD_SENTENCE = "add_sentence"
    COMPLETE = "complete"


@dataclass(frozen=True)
class GenerationRequest:
    mode: GenerationMode
    n_sentences: int = 1
    prefix_summary: tuple[int, ...] = ()
    prefix_in_sentence: tuple[int, ...] = ()
    selection: frozenset[int] = frozenset()
    beam_width: int = 1
    seed: int = 0

    def validate(self, max_summary_sentences: int, n_source_tokens: int) -> None:
        if self.mode == GenerationMode.INIT_WITH:
            if not 1 <= self.n_sentences <= max_summary_sentences:
                raise ContractViolation(
                    f"n_sentences must be in [1, {max_summary_sentences}]"
                )
        if self.mode == GenerationMode.COMPLETE and not self.prefix_in_sentence:
            raise ContractViolation("complete mode requires a non-empty prefix")
        if self.beam_width < 1:
            raise ContractViolation("beam_width must be >= 1")
        for pos in self.selection:
            if pos < 0 or pos >= n_source_tokens:
                raise ContractViolation(f"selected position {pos} out of range")


@dataclass
class TraceRow:
    """Attention snapshot for one generated token."""

    token_id: int
    summary_sentence: int              # index of the output sentence
    attention: np.ndarray              # [n] distribution over source positions
    copied_from: int | None            # source position when mass arrived via copy
    empty_copy_support: bool


@dataclass
class AttentionTrace:
    rows: list[TraceRow] = field(default_factory=list)
    truncated_sentences: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)


@dataclass
class GenerationResult:
    sentences: list[list[int]]
    trace: AttentionTrace
    copy_flags: list[int | None]       # per generated token, source position or None

    @property
    def n_generated(self) -> int:
        return len(self.trace.rows)


def _terminators(vocab: Vocab) -> frozenset[int]:
    return vocab.terminator_ids


@dataclass
class _Hypothesis:
    state_ref: object
    log_prob: float
    tokens: list[int]                  # generated tokens only
    rows: list[TraceRow]
    sentences_done: int
    tokens_in_sentence: int
    truncated: list[int]
    finished: bool = False


def generate(
    model: CopyGatedSeq2Seq,
    vocab: Vocab,
    document: Document,
    request: GenerationRequest,
) -> GenerationResult:
    """Run hook-gated decoding for one request against one document."""
    request.validate(model.config.max_summary_sentences, len(document.tokens))

    tape = Tape()
    bound = model.bind(tape)
    src_ids = vocab.encode_tokens(document.tokens)
    enc = bound.encode(src_ids)

    probs_ref = bound.hook_probs(enc)
    deselected = [
        i for i in range(len(document.tokens)) if i not in request.selection
    ]
    hook = apply_prior(probs_ref.value, deselected)
    effective = tape.const(hook.effective)

    terminators = _terminators(vocab)
    if request.mode == GenerationMode.INIT_WITH:
        sentences_needed = request.n_sentences
    else:
        sentences_needed = 1

    # Teacher-forced context: summary so far, then any in-sentence prefix.
    state = enc.final
    prev = BOS
    forced = list(request.prefix_summary)
    if request.mode == GenerationMode.COMPLETE:
        forced += list(request.prefix_in_sentence)
    for tok in forced:
        step = bound.decode_step(enc, effective, prev, state)
        state = step.state
        prev = tok

    start_sentence_index = 0
    prefix_len_in_sentence = (
        len(request.prefix_in_sentence)
        if request.mode == GenerationMode.COMPLETE
        else 0
    )

    root = _Hypothesis(
        state_ref=state,
        log_prob=0.0,
        tokens=[],
        rows=[],
        sentences_done=0,
        tokens_in_sentence=prefix_len_in_sentence,
        truncated=[],
    )

    best = _beam_decode(
        bound, enc, effective, prev, root,
        beam_width=request.beam_width,
        sentences_needed=sentences_needed,
        terminators=terminators,
        max_tokens_per_sentence=model.config.max_tokens_per_sentence,
        start_sentence_index=start_sentence_index,
    )

    sentences = _assemble_sentences(best.rows, list(request.prefix_in_sentence))
    trace = AttentionTrace(rows=best.rows, truncated_sentences=best.truncated)
    if any(r.empty_copy_support for r in best.rows):
        trace.warnings.append("empty copy support: fell back to pure generation")
    if best.truncated:
        trace.warnings.append(
            "sentence token budget reached before a terminator"
        )
    copy_flags = [r.copied_from for r in best.rows]
    return GenerationResult(sentences=sentences, trace=trace, copy_flags=copy_flags)


def _beam_decode(
    bound: BoundForwardModel,
    enc: EncoderOutput,
    effective,
    first_prev: int,
    root: _Hypothesis,
    beam_width: int,
    sentences_needed: int,
    terminators: frozenset[int],
    max_tokens_per_sentence: int,
    start_sentence_index: int,
) -> _Hypothesis:
    # prev token per hypothesis: root starts from the shared forced context.
    live: list[tuple[int, _Hypothesis]] = [(first_prev, root)]
    finished: list[_Hypothesis] = []
    max_steps = sentences_needed * max_tokens_per_sentence + 1

    for _ in range(max_steps):
        if not live:
            break
        candidates: list[tuple[float, int, int, int, _Hypothesis, DecoderStepOutput]] = []
        for hyp_index, (prev, hyp) in enumerate(live):
            step = bound.decode_step(enc, effective, prev, hyp.state_ref)
            dist = step.output_value
            if beam_width == 1:
                token_ids = [int(np.argmax(dist))]
            else:
                order = np.argsort(-dist, kind="stable")
                token_ids = [int(t) for t in order[:beam_width]]
            for tok in token_ids:
                p = float(dist[tok])
                log_p = float(np.log(max(p, 1e-300)))
                candidates.append(
                    (hyp.log_prob + log_p, hyp_index, tok, prev, hyp, step)
                )
        # Deterministic order: score desc, then source hypothesis, then token id.
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

        next_live: list[tuple[int, _Hypothesis]] = []
        for log_prob, _, tok, _, hyp, step in candidates:
            if len(next_live) + len(finished) >= beam_width and beam_width > 1:
                break
            new = _extend(
                hyp, step, tok, log_prob, enc, terminators,
                max_tokens_per_sentence, start_sentence_index,
            )
            if new.sentences_done >= sentences_needed:
                new.finished = True
                finished.append(new)
            else:
                next_live.append((tok, new))
            if beam_width == 1:
                break
        live = next_live[:beam_width]
        if len(finished) >= beam_width:
            break

    pool = finished if finished else [h for _, h in live]
    pool.sort(key=lambda h: -h.log_prob)
    return pool[0] if pool else root


def _extend(
    hyp: _Hypothesis,
    step: DecoderStepOutput,
    tok: int,
    log_prob: float,
    enc: EncoderOutput,
    terminators: frozenset[int],
    max_tokens_per_sentence: int,
    start_sentence_index: int,
) -> _Hypothesis:
    sentence_index = start_sentence_index + hyp.sentences_done
    row = TraceRow(
        token_id=tok,
        summary_sentence=sentence_index,
        attention=step.attention_value.copy(),
        copied_from=copy_source_position(step, tok, enc.token_ids),
        empty_copy_support=step.empty_support,
    )
    tokens_in_sentence = hyp.tokens_in_sentence + 1
    sentences_done = hyp.sentences_done
    truncated = list(hyp.truncated)
    if tok in terminators:
        sentences_done += 1
        tokens_in_sentence = 0
    elif tokens_in_sentence >= max_tokens_per_sentence:
        truncated.append(sentence_index)
        sentences_done += 1
        tokens_in_sentence = 0
    return _Hypothesis(
        state_ref=step.state,
        log_prob=log_prob,
        tokens=hyp.tokens + [tok],
        rows=hyp.rows + [row],
        sentences_done=sentences_done,
        tokens_in_sentence=tokens_in_sentence,
        truncated=truncated,
    )


def _assemble_sentences(
    rows: list[TraceRow], prefix_in_sentence: list[int]
) -> list[list[int]]:
    """Group generated tokens into sentences by their trace sentence index.

    Sentence membership was decided during decoding (terminator or budget
    cut), so grouping by index preserves budget-truncated boundaries. The
    typed prefix belongs to the first sentence.
    """
    sentences: list[list[int]] = []
    for row in rows:
        while row.summary_sentence >= len(sentences):
            sentences.append([])
        sentences[row.summary_sentence].append(row.token_id)
    if prefix_in_sentence:
        if not sentences:
            sentences = [[]]
        sentences[0] = list(prefix_in_sentence) + sentences[0]
    return sentences


# ---------------------------------------------------------------------------
# Exact inference over small discrete latent spaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteLatentModel:
    """Finite latent variable with an enumerable outcome table."""

    latent_values: tuple[str, ...]
    outcomes: tuple[str, ...]
    prior: tuple[float, ...]
    likelihood: tuple[tuple[float, ...], ...]   # [latent][outcome]

    def __post_init__(self):
        if len(self.prior) != len(self.latent_values):
            raise ContractViolation("prior length != number of latent values")
        if abs(sum(self.prior) - 1.0) > 1e-12:
            raise ContractViolation("prior does not sum to 1")
        for row in self.likelihood:
            if len(row) != len(self.outcomes):
                raise ContractViolation("likelihood row length != outcome count")
            if abs(sum(row) - 1.0) > 1e-12:
                raise ContractViolation("likelihood row does not sum to 1")

    def outcome_index(self, outcome: str) -> int:
        try:
            return self.outcomes.index(outcome)
        except ValueError:
            raise ContractViolation(f"unknown outcome {outcome!r}") from None


def marginal(model: DiscreteLatentModel, outcome: str) -> float:
    """p(outcome) by exact enumeration over every latent value."""
    j = model.outcome_index(outcome)
    total = 0.0
    for i in range(len(model.latent_values)):
        total += model.likelihood[i][j] * model.prior[i]
    return total


def posterior(model: DiscreteLatentModel, outcome: str) -> dict[str, float]:
    """p(latent | outcome) via Bayes; errors when the outcome is unreachable."""
    j = model.outcome_index(outcome)
    evidence = marginal(model, outcome)
    if evidence <= 0.0:
        raise ContractViolation(f"unreachable outcome {outcome!r}")
    return {
        z: model.likelihood[i][j] * model.prior[i] / evidence
        for i, z in enumerate(model.latent_values)
    }


def lever_model(correct_track_prob: float = 1.0) -> DiscreteLatentModel:
    """Two-position lever routing a train to a left or right end position."""
    p = correct_track_prob
    return DiscreteLatentModel(
        latent_values=("left", "right"),
        outcomes=("left_end", "right_end"),
        prior=(0.5, 0.5),
        likelihood=((p, 1.0 - p), (1.0 - p, p)),
    )


def lever_demo() -> str:
    """Transcript of forward and backward inference on the lever model."""
    model = lever_model()
    lines = [
        "lever demo: a two-position lever routes a train to one of two ends",
        "prior: P(lever=left) = 0.500000, P(lever=right) = 0.500000",
        "tracks: deterministic (the lever fully determines the end position)",
        "",
        "forward inference (position of the train before it runs):",
    ]
    for outcome in model.outcomes:
        lines.append(f"  P(end={outcome}) = {marginal(model, outcome):.6f}")
    lines.append("")
    lines.append("backward inference (train observed at an end position):")
    for outcome in model.outcomes:
        post = posterior(model, outcome)
        parts = ", ".join(
            f"P(lever={z}|end)={post[z]:.6f}" for z in model.latent_values
        )
        lines.append(f"  observed end={outcome} -> {parts}")
    return "\n".join(lines) + "\n"
