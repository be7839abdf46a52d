import numpy as np
import pytest

from cosum.autodiff import ContractViolation
from cosum.inference import GenerationMode, TraceRow
from cosum.rng import Prng
from cosum.session import (
    Origin,
    SelectionTemplate,
    aggregate_attention,
    create_session,
    delete_sentence,
    edit_sentence,
    run_forward,
    select_template,
    set_selection,
)


@pytest.fixture()
def session_and_engine(tiny_engine):
    engine, examples = tiny_engine
    session = create_session("s1", examples[0].document.raw)
    return session, engine


def history_types(session):
    return [event["type"] for event in session.history]


class TestSelection:
    def test_complement_becomes_deselected(self, session_and_engine):
        session, _ = session_and_engine
        set_selection(session, [0, 1])
        selected = session.selected_word_positions()
        start, stop = session.document.sentence_spans[2]
        assert all(i not in selected for i in range(start, stop))
        spans01 = set()
        for s in (0, 1):
            a, b = session.document.sentence_spans[s]
            spans01.update(range(a, b))
        assert selected == spans01

    def test_empty_selection_deselects_everything(self, session_and_engine):
        session, _ = session_and_engine
        set_selection(session, [])
        assert session.selected_word_positions() == set()

    def test_same_selection_twice_one_state_two_events(self, session_and_engine):
        session, _ = session_and_engine
        set_selection(session, [1])
        state_one = set(session.selection)
        set_selection(session, [1])
        assert session.selection == state_one
        assert history_types(session).count("SELECT") == 2

    def test_invalid_index_leaves_session_unchanged(self, session_and_engine):
        session, _ = session_and_engine
        set_selection(session, [0])
        before = set(session.selection)
        before_events = len(session.history)
        with pytest.raises(ContractViolation):
            set_selection(session, [99])
        assert session.selection == before
        assert len(session.history) == before_events

    def test_word_selection_requires_aggregation_off(self, session_and_engine):
        session, _ = session_and_engine
        with pytest.raises(ContractViolation):
            set_selection(session, word_positions=[0, 1])
        session.aggregation_enabled = False
        set_selection(session, word_positions=[0, 1])
        assert session.selected_word_positions() == {0, 1}


class TestTemplates:
    def test_all_then_none(self, session_and_engine):
        session, _ = session_and_engine
        select_template(session, SelectionTemplate.ALL)
        assert session.selection == set(range(session.document.n_sentences))
        select_template(session, SelectionTemplate.NONE)
        assert session.selection == set()

    def test_match_requires_coverage(self, session_and_engine):
        session, _ = session_and_engine
        with pytest.raises(ContractViolation):
            select_template(session, SelectionTemplate.MATCH)

    def test_match_sets_covered_and_is_idempotent(self, session_and_engine):
        session, engine = session_and_engine
        select_template(session, SelectionTemplate.ALL)
        run_forward(session, engine, GenerationMode.INIT_WITH, n_sentences=1)
        covered = set(session.coverage.covered_sentences)
        select_template(session, SelectionTemplate.MATCH)
        assert session.selection == covered
        select_template(session, SelectionTemplate.MATCH)
        assert session.selection == covered


class TestRunForward:
    def test_init_with_populates_summary_and_coverage(self, session_and_engine):
        session, engine = session_and_engine
        select_template(session, SelectionTemplate.ALL)
        run_forward(session, engine, GenerationMode.INIT_WITH, n_sentences=2)
        assert len(session.summary) == 2
        assert all(s.origin == Origin.MODEL for s in session.summary)
        assert session.coverage is not None
        assert len(session.aggregated) == session.document.n_sentences
        assert all(len(row) == 2 for row in session.aggregated)

    def test_add_sentence_appends_and_keeps_existing_bits(self, session_and_engine):
        session, engine = session_and_engine
        select_template(session, SelectionTemplate.ALL)
        run_forward(session, engine, GenerationMode.INIT_WITH, n_sentences=2)
        before = [list(s.tokens) for s in session.summary]
        run_forward(session, engine, GenerationMode.ADD_SENTENCE)
        assert len(session.summary) == 3
        assert [list(s.tokens) for s in session.summary[:2]] == before

    def test_every_summary_change_is_followed_by_backward(self, session_and_engine):
        session, engine = session_and_engine
        select_template(session, SelectionTemplate.ALL)
        run_forward(session, engine, GenerationMode.INIT_WITH, n_sentences=1)
        edit_sentence(session, engine, 0, "luna says rock .")
        delete_sentence(session, engine, 0)
        types = history_types(session)
        for i, event_type in enumerate(types):
            if event_type in ("FORWARD", "EDIT", "DELETE"):
                assert types[i + 1] == "BACKWARD"

    def test_aggregated_row_mass_equals_token_count(self, session_and_engine):
        session, engine = session_and_engine
        select_template(session, SelectionTemplate.ALL)
        run_forward(session, engine, GenerationMode.INIT_WITH, n_sentences=2)
        total = sum(sum(row) for row in session.aggregated)
        assert abs(total - len(session.trace_rows)) < 1e-9

    def test_complete_marks_mixed_origin(self, session_and_engine):
        session, engine = session_and_engine
        select_template(session, SelectionTemplate.ALL)
        run_forward(
            session, engine, GenerationMode.COMPLETE,
            prefix_text="nasa the ...",
        )
        assert session.summary[-1].origin == Origin.MIXED


class TestEditDelete:
    def prepared(self, session, engine):
        select_template(session, SelectionTemplate.ALL)
        run_forward(session, engine, GenerationMode.INIT_WITH, n_sentences=2)
        return session

    def test_delete_only_sentence_leaves_empty_summary_with_warning(
        self, session_and_engine
    ):
        session, engine = session_and_engine
        select_template(session, SelectionTemplate.ALL)
        run_forward(session, engine, GenerationMode.INIT_WITH, n_sentences=1)
        delete_sentence(session, engine, 0)
        assert session.summary == []
        assert session.coverage.empty_summary

    def test_edit_runs_backward_exactly_once(self, session_and_engine):
        session, engine = session_and_engine
        self.prepared(session, engine)
        before = history_types(session).count("BACKWARD")
        edit_sentence(session, engine, 0, "comet says ice .")
        types = history_types(session)
        assert types.count("BACKWARD") == before + 1
        assert types[-2:] == ["EDIT", "BACKWARD"]

    def test_token_identical_edit_keeps_origin(self, session_and_engine):
        session, engine = session_and_engine
        self.prepared(session, engine)
        original_origin = session.summary[0].origin
        text = " ".join(session.summary[0].tokens)
        edit_sentence(session, engine, 0, text)
        assert session.summary[0].origin == original_origin

    def test_full_rewrite_becomes_user(self, session_and_engine):
        session, engine = session_and_engine
        self.prepared(session, engine)
        edit_sentence(session, engine, 0, "completely different words here")
        assert session.summary[0].origin == Origin.USER

    def test_partial_rewrite_becomes_mixed(self, session_and_engine):
        session, engine = session_and_engine
        self.prepared(session, engine)
        edit_sentence(session, engine, 0, "luna says rock .")
        edit_sentence(session, engine, 0, "luna says ice .")
        assert session.summary[0].origin == Origin.MIXED

    def test_edit_that_splits_resegments(self, session_and_engine):
        session, engine = session_and_engine
        self.prepared(session, engine)
        n_before = len(session.summary)
        edit_sentence(session, engine, 0, "one thing . two things .")
        assert len(session.summary) == n_before + 1
        assert session.summary[0].tokens == ["one", "thing", "."]
        assert session.summary[1].tokens == ["two", "things", "."]

    def test_edit_invalidates_trace_rows_of_that_sentence(self, session_and_engine):
        session, engine = session_and_engine
        self.prepared(session, engine)
        rows_for_zero = [r for r in session.trace_rows if r.summary_sentence == 0]
        assert rows_for_zero
        edit_sentence(session, engine, 0, "fresh words entirely")
        assert all(
            row.summary_sentence != 0 or row is None
            for row in session.trace_rows
            if row.summary_sentence == 0
        )
        total = sum(sum(row) for row in session.aggregated)
        assert abs(total - len(session.trace_rows)) < 1e-9

    def test_delete_shifts_trace_indices(self, session_and_engine):
        session, engine = session_and_engine
        self.prepared(session, engine)
        delete_sentence(session, engine, 0)
        assert all(r.summary_sentence == 0 for r in session.trace_rows)

    def test_model_never_rewrites_user_text(self, session_and_engine):
        """Only a forward call changes model-side summary text; backward and
        edits never touch other sentences."""
        session, engine = session_and_engine
        self.prepared(session, engine)
        edit_sentence(session, engine, 0, "my own sentence .")
        kept = [list(s.tokens) for s in session.summary]
        run_forward(session, engine, GenerationMode.ADD_SENTENCE)
        assert [list(s.tokens) for s in session.summary[: len(kept)]] == kept

    def test_bad_index_rejected(self, session_and_engine):
        session, engine = session_and_engine
        with pytest.raises(ContractViolation):
            edit_sentence(session, engine, 5, "x")
        with pytest.raises(ContractViolation):
            delete_sentence(session, engine, 0)


class TestAggregateAttention:
    def test_single_token_two_sentences(self):
        rows = [TraceRow(token_id=7, summary_sentence=0,
                         attention=np.array([0.3, 0.7]),
                         copied_from=None, empty_copy_support=False)]
        matrix = aggregate_attention(rows, [(0, 1), (1, 2)], 1)
        assert matrix == [[pytest.approx(0.3)], [pytest.approx(0.7)]]

    def test_total_equals_traced_token_count(self):
        prng = Prng(3)
        for _ in range(100):
            n_tokens = 2 + prng.randint(10)
            spans = []
            start = 0
            while start < n_tokens:
                size = 1 + prng.randint(3)
                spans.append((start, min(start + size, n_tokens)))
                start += size
            n_out = 1 + prng.randint(3)
            rows = []
            for _ in range(prng.randint(12)):
                raw = np.array([prng.uniform() + 1e-9 for _ in range(n_tokens)])
                rows.append(TraceRow(
                    token_id=0, summary_sentence=prng.randint(n_out),
                    attention=raw / raw.sum(),
                    copied_from=None, empty_copy_support=False,
                ))
            matrix = aggregate_attention(rows, spans, n_out)
            total = sum(sum(row) for row in matrix)
            assert abs(total - len(rows)) < 1e-9

    def test_word_level_and_sentence_level_totals_agree(self):
        prng = Prng(9)
        for _ in range(100):
            n_tokens = 3 + prng.randint(8)
            spans = [(i, i + 1) for i in range(n_tokens)]  # word level
            merged = [(0, n_tokens)]                        # one big sentence
            rows = []
            for _ in range(1 + prng.randint(6)):
                raw = np.array([prng.uniform() + 1e-9 for _ in range(n_tokens)])
                rows.append(TraceRow(
                    token_id=0, summary_sentence=0,
                    attention=raw / raw.sum(),
                    copied_from=None, empty_copy_support=False,
                ))
            word_total = sum(sum(r) for r in aggregate_attention(rows, spans, 1))
            sent_total = sum(sum(r) for r in aggregate_attention(rows, merged, 1))
            assert abs(word_total - sent_total) < 1e-12
