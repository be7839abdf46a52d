"""Collaborative session state: selections, summary drafts, traces, coverage.

One session holds everything the interface needs: the source document, the
user's blue content selection, the evolving summary with per-sentence
provenance, attention trace rows tied to the summary sentences they
produced, the sentence-level aggregated attention matrix, and the red
coverage report. Every event that changes the summary (a forward
generation, an edit, a delete) immediately re-runs backward attribution,
so coverage is never stale; the history log records the event pairs.

Proxy state (red borders, mirrored selection) is always derived from
``coverage.covered_sentences`` and ``selection``; it is never stored.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from cosum.attribution import DEFAULT_THRESHOLD, AttributionModel, attribute
from cosum.autodiff import ContractViolation
from cosum.inference import (
    AttentionTrace,
    GenerationMode,
    GenerationRequest,
    TraceRow,
    generate,
)
from cosum.model import CopyGatedSeq2Seq
from cosum.textproc import Document, Vocab, split_sentences, tokenize


class Origin(str, Enum):
    MODEL = "MODEL"
    USER = "USER"
    MIXED = "MIXED"


class SelectionTemplate(str, Enum):
    ALL = "all"
    NONE = "none"
    MATCH = "match"


@dataclass
class SummarySentence:
    tokens: list[str]
    origin: Origin


@dataclass
class Engine:
    """Immutable model bundle shared by every session."""

    model: CopyGatedSeq2Seq
    attribution: AttributionModel
    vocab: Vocab
    threshold: float = DEFAULT_THRESHOLD


@dataclass
class Session:
    id: str
    document: Document
    selection: set[int] = field(default_factory=set)       # sentence indices
    word_selection: set[int] | None = None                  # optional word mode
    summary: list[SummarySentence] = field(default_factory=list)
    coverage: object | None = None                          # CoverageReport
    trace_rows: list[TraceRow] = field(default_factory=list)
    aggregated: list[list[float]] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    aggregation_enabled: bool = True
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def last_trace(self) -> AttentionTrace | None:
        if not self.trace_rows:
            return None
        return AttentionTrace(rows=list(self.trace_rows))

    def selected_word_positions(self) -> set[int]:
        if self.word_selection is not None:
            return set(self.word_selection)
        positions: set[int] = set()
        for s in self.selection:
            start, stop = self.document.sentence_spans[s]
            positions.update(range(start, stop))
        return positions

    def summary_tokens(self) -> list[str]:
        tokens: list[str] = []
        for sentence in self.summary:
            tokens.extend(sentence.tokens)
        return tokens


def create_session(session_id: str, document_text: str) -> Session:
    document = Document.from_text(document_text)
    if not document.tokens:
        raise ContractViolation("document must contain at least one token")
    session = Session(id=session_id, document=document)
    _log(session, "CREATE", {"n_sentences": document.n_sentences})
    return session


def _log(session: Session, event_type: str, detail: dict | None = None) -> None:
    entry = {"seq": len(session.history), "type": event_type}
    if detail:
        entry["detail"] = detail
    session.history.append(entry)


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


def set_selection(
    session: Session,
    sentence_indices=None,
    word_positions=None,
) -> Session:
    """Replace the blue content selection (sentence level or word level)."""
    if (sentence_indices is None) == (word_positions is None):
        raise ContractViolation(
            "exactly one of sentence_indices / word_positions is required"
        )
    if sentence_indices is not None:
        indices = {int(i) for i in sentence_indices}
        for i in indices:
            if i < 0 or i >= session.document.n_sentences:
                raise ContractViolation(f"sentence index {i} out of range")
        session.selection = indices
        session.word_selection = None
        _log(session, "SELECT", {"sentences": sorted(indices)})
    else:
        if session.aggregation_enabled:
            raise ContractViolation(
                "word-level selection requires aggregation toggled off"
            )
        positions = {int(i) for i in word_positions}
        for i in positions:
            if i < 0 or i >= len(session.document.tokens):
                raise ContractViolation(f"word position {i} out of range")
        session.word_selection = positions
        _log(session, "SELECT", {"words": sorted(positions)})
    return session


def select_template(session: Session, kind: SelectionTemplate) -> Session:
    if kind == SelectionTemplate.ALL:
        return set_selection(session, range(session.document.n_sentences))
    if kind == SelectionTemplate.NONE:
        return set_selection(session, [])
    if session.coverage is None:
        raise ContractViolation("no backward result to match against")
    return set_selection(session, session.coverage.covered_sentences)


# ---------------------------------------------------------------------------
# Forward generation and backward refresh
# ---------------------------------------------------------------------------


def run_forward(
    session: Session,
    engine: Engine,
    mode: GenerationMode,
    n_sentences: int = 1,
    prefix_text: str = "",
    beam_width: int = 1,
) -> Session:
    """Generate under the current selection, then refresh coverage."""
    document = session.document
    selection_words = frozenset(session.selected_word_positions())

    prefix_summary = tuple(
        engine.vocab.encode_tokens(session.summary_tokens())
    )
    prefix_in_sentence: tuple[int, ...] = ()
    if mode == GenerationMode.COMPLETE:
        typed = [t for t in tokenize(prefix_text) if t != "..."]
        prefix_in_sentence = tuple(engine.vocab.encode_tokens(typed))

    request = GenerationRequest(
        mode=mode,
        n_sentences=n_sentences,
        prefix_summary=prefix_summary if mode != GenerationMode.INIT_WITH else (),
        prefix_in_sentence=prefix_in_sentence,
        selection=selection_words,
        beam_width=beam_width,
    )
    result = generate(engine.model, engine.vocab, document, request)

    if mode == GenerationMode.INIT_WITH:
        session.summary = []
        session.trace_rows = []
    base_index = len(session.summary)

    for sentence_ids in result.sentences:
        tokens = engine.vocab.decode(sentence_ids)
        origin = (
            Origin.MIXED
            if mode == GenerationMode.COMPLETE
            else Origin.MODEL
        )
        session.summary.append(SummarySentence(tokens=tokens, origin=origin))

    for row in result.trace.rows:
        session.trace_rows.append(
            TraceRow(
                token_id=row.token_id,
                summary_sentence=base_index + row.summary_sentence,
                attention=row.attention,
                copied_from=row.copied_from,
                empty_copy_support=row.empty_copy_support,
            )
        )

    _log(
        session,
        "FORWARD",
        {
            "mode": mode.value,
            "new_sentences": len(result.sentences),
            "warnings": list(result.trace.warnings),
        },
    )
    _refresh(session, engine)
    return session


def _refresh(session: Session, engine: Engine) -> None:
    """Recompute aggregation and backward coverage after a summary change."""
    session.aggregated = aggregate_attention(
        session.trace_rows,
        session.document.sentence_spans,
        len(session.summary),
    )
    session.coverage = attribute(
        engine.attribution,
        engine.vocab,
        session.document,
        session.summary_tokens(),
        threshold=engine.threshold,
    )
    _log(
        session,
        "BACKWARD",
        {"covered_sentences": list(session.coverage.covered_sentences)},
    )


# ---------------------------------------------------------------------------
# Summary editing
# ---------------------------------------------------------------------------


def edit_sentence(
    session: Session, engine: Engine, index: int, new_text: str
) -> Session:
    if index < 0 or index >= len(session.summary):
        raise ContractViolation(f"summary index {index} out of range")
    old = session.summary[index]
    new_tokens = tokenize(new_text)

    if new_tokens == old.tokens:
        # Token-identical edit: origin and trace untouched, backward still runs.
        _log(session, "EDIT", {"index": index, "noop": True})
        _refresh(session, engine)
        return session

    spans = split_sentences(new_tokens) or ([(0, 0)] if not new_tokens else [])
    pieces = [new_tokens[a:b] for a, b in spans] if new_tokens else []
    if not pieces:
        pieces = [[]]

    overlap = set(new_tokens) & set(old.tokens)
    origin = Origin.MIXED if overlap else Origin.USER

    replacement = [SummarySentence(tokens=piece, origin=origin) for piece in pieces]
    session.summary[index : index + 1] = replacement

    shift = len(replacement) - 1
    kept: list[TraceRow] = []
    for row in session.trace_rows:
        if row.summary_sentence == index:
            continue  # edited sentence's traced tokens are invalidated
        new_index = (
            row.summary_sentence + shift
            if row.summary_sentence > index
            else row.summary_sentence
        )
        kept.append(
            TraceRow(
                token_id=row.token_id,
                summary_sentence=new_index,
                attention=row.attention,
                copied_from=row.copied_from,
                empty_copy_support=row.empty_copy_support,
            )
        )
    session.trace_rows = kept

    _log(session, "EDIT", {"index": index, "n_pieces": len(replacement)})
    _refresh(session, engine)
    return session


def delete_sentence(session: Session, engine: Engine, index: int) -> Session:
    if index < 0 or index >= len(session.summary):
        raise ContractViolation(f"summary index {index} out of range")
    del session.summary[index]
    kept: list[TraceRow] = []
    for row in session.trace_rows:
        if row.summary_sentence == index:
            continue
        new_index = (
            row.summary_sentence - 1
            if row.summary_sentence > index
            else row.summary_sentence
        )
        kept.append(
            TraceRow(
                token_id=row.token_id,
                summary_sentence=new_index,
                attention=row.attention,
                copied_from=row.copied_from,
                empty_copy_support=row.empty_copy_support,
            )
        )
    session.trace_rows = kept
    _log(session, "DELETE", {"index": index})
    _refresh(session, engine)
    return session


# ---------------------------------------------------------------------------
# Attention aggregation
# ---------------------------------------------------------------------------


def aggregate_attention(
    trace_rows: list[TraceRow],
    sentence_spans: list[tuple[int, int]],
    n_summary_sentences: int,
) -> list[list[float]]:
    """Sentence-to-sentence attention mass: entry [s][o] sums the attention
    from every token generated into output sentence o onto source span s."""
    matrix = np.zeros((len(sentence_spans), n_summary_sentences))
    for row in trace_rows:
        o = row.summary_sentence
        if o >= n_summary_sentences:
            continue
        for s, (start, stop) in enumerate(sentence_spans):
            matrix[s, o] += float(row.attention[start:stop].sum())
    return [[float(x) for x in r] for r in matrix]
