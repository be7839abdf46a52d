import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cosum.rng import Prng
from cosum.textproc import (
    FILLER_POOL,
    SUMMARY_GLUE,
    TOPIC_POOL,
    CorpusExample,
    Document,
    Vocab,
    VocabSpec,
    build_vocab,
    corpus_vocab,
    detokenize,
    generate_synthetic_corpus,
    load_corpus,
    save_corpus,
    split_sentences,
    tokenize,
)


class TestTokenize:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("Hello, world.", ["hello", ",", "world", "."]),
            ("The water is ...", ["the", "water", "is", "..."]),
            ("", []),
            ("don't", ["don", "'", "t"]),
            ('say "hi" (now); ok?', ["say", '"', "hi", '"', "(", "now", ")", ";", "ok", "?"]),
            ("a...b", ["a", "...", "b"]),
            ("UPPER Case", ["upper", "case"]),
        ],
    )
    def test_rules(self, text, expected):
        assert tokenize(text) == expected

    @given(st.lists(st.sampled_from(list(TOPIC_POOL) + [".", ",", "...", "!"]), max_size=30))
    @settings(max_examples=200, deadline=None)
    def test_detokenize_tokenize_idempotent(self, tokens):
        joined = detokenize(tokens)
        once = tokenize(joined)
        assert tokenize(detokenize(once)) == once


class TestSplitSentences:
    @pytest.mark.parametrize(
        "tokens,expected",
        [
            (["a", ".", "b", "."], [(0, 2), (2, 4)]),
            (["a", "b"], [(0, 2)]),
            (["x", "?", "y", "!", "z"], [(0, 2), (2, 4), (4, 5)]),
            ([], []),
            (["..."], [(0, 1)]),
        ],
    )
    def test_rules(self, tokens, expected):
        assert split_sentences(tokens) == expected

    @given(
        st.lists(
            st.sampled_from(["tok", "more", ".", "!", "?", "...", ","]), max_size=40
        )
    )
    @settings(max_examples=1000, deadline=None)
    def test_spans_partition_tokens(self, tokens):
        spans = split_sentences(tokens)
        covered = [i for start, stop in spans for i in range(start, stop)]
        assert covered == list(range(len(tokens)))
        assert all(stop > start for start, stop in spans)


class TestVocab:
    def test_reserved_ids(self):
        vocab = build_vocab([["zebra"]], 10)
        assert vocab.id_to_token[:5] == ["<pad>", "<bos>", "<eos>", "<unk>", "..."]
        assert vocab.encode("...") == 4

    def test_frequency_order(self):
        vocab = build_vocab([["a", "a", "b"]], 10)
        assert vocab.encode("a") == 5 and vocab.encode("b") == 6

    def test_tie_broken_lexicographically(self):
        vocab = build_vocab([["b", "b", "a", "a"]], 10)
        assert vocab.encode("a") == 5 and vocab.encode("b") == 6

    def test_overflow_maps_to_unk(self):
        vocab = build_vocab([["a", "a", "b", "b", "c"]], 7)
        assert vocab.encode("c") == 3  # UNK
        assert len(vocab) == 7

    def test_roundtrip_config(self):
        vocab = build_vocab([["x", "y", "x"]], 10)
        again = Vocab.from_config(vocab.to_config())
        assert again.token_to_id == vocab.token_to_id

    def test_max_size_must_exceed_reserved(self):
        with pytest.raises(ValueError):
            build_vocab([["a"]], 5)


class TestSyntheticCorpus:
    def test_matches_golden_fixture(self, goldens_dir):
        golden = json.loads((goldens_dir / "corpus_seed7.json").read_text())
        ex = generate_synthetic_corpus(Prng(7), 1, 2)[0]
        assert ex.document.raw == golden["document"]
        assert ex.document.tokens == golden["tokens"]
        assert [list(s) for s in ex.document.sentence_spans] == golden["sentence_spans"]
        assert ex.summary_tokens == golden["summary"]
        assert ex.gold_tags == golden["gold_tags"]
        assert ex.summary_copied == golden["summary_copied"]

    def test_bit_identical_across_runs(self):
        a = generate_synthetic_corpus(Prng(99), 5, 3)
        b = generate_synthetic_corpus(Prng(99), 5, 3)
        for x, y in zip(a, b):
            assert x.document.tokens == y.document.tokens
            assert x.summary_tokens == y.summary_tokens
            assert x.gold_tags == y.gold_tags

    @pytest.mark.parametrize("n_sentences", [2, 3, 4, 6])
    def test_tag_and_summary_arithmetic(self, n_sentences):
        for seed in range(5):
            for ex in generate_synthetic_corpus(Prng(seed), 3, n_sentences):
                n_important = math.ceil(n_sentences / 2)
                assert sum(ex.gold_tags) == 2 * n_important
                assert len(ex.summary_tokens) == 4 * n_important
                assert len(ex.gold_tags) == len(ex.document.tokens)

    def test_copied_summary_tokens_have_tagged_source(self):
        for ex in generate_synthetic_corpus(Prng(4), 10, 4):
            tagged_words = {
                ex.document.tokens[i]
                for i, tag in enumerate(ex.gold_tags)
                if tag == 1
            }
            for tok, copied in zip(ex.summary_tokens, ex.summary_copied):
                if copied:
                    assert tok in tagged_words

    def test_sentence_template_shape(self):
        for ex in generate_synthetic_corpus(Prng(2), 5, 3):
            for start, stop in ex.document.sentence_spans:
                sentence = ex.document.tokens[start:stop]
                assert sentence[-1] == "."
                assert sentence[0] in TOPIC_POOL
                assert all(t in FILLER_POOL for t in sentence[1:-2])

    def test_summary_glue_never_in_documents(self):
        for ex in generate_synthetic_corpus(Prng(8), 10, 4):
            assert SUMMARY_GLUE not in ex.document.tokens

    def test_requires_two_sentences(self):
        with pytest.raises(ValueError):
            generate_synthetic_corpus(Prng(0), 1, 1)

    def test_small_pools_rejected(self):
        spec = VocabSpec(n_topics=3, n_fillers=3, n_keywords=3)
        with pytest.raises(ValueError):
            generate_synthetic_corpus(Prng(0), 1, 4, spec)

    def test_mismatched_tags_rejected(self):
        doc = Document.from_text("a b .")
        with pytest.raises(ValueError):
            CorpusExample(document=doc, summary_tokens=[], gold_tags=[1])


class TestCorpusFile:
    def test_jsonl_roundtrip(self, tmp_path):
        examples = generate_synthetic_corpus(Prng(1), 8, 3)
        path = tmp_path / "corpus.jsonl"
        save_corpus(path, examples)
        loaded = load_corpus(path)
        assert len(loaded) == len(examples)
        for x, y in zip(examples, loaded):
            assert x.document.tokens == y.document.tokens
            assert x.summary_tokens == y.summary_tokens
            assert x.gold_tags == y.gold_tags

    def test_file_is_utf8_lf_json_lines(self, tmp_path):
        examples = generate_synthetic_corpus(Prng(1), 3, 2)
        path = tmp_path / "corpus.jsonl"
        save_corpus(path, examples)
        raw = path.read_bytes()
        assert b"\r" not in raw
        lines = raw.decode("utf-8").strip().split("\n")
        assert len(lines) == 3
        record = json.loads(lines[0])
        assert set(record) == {"document", "summary", "tags"}

    def test_corpus_vocab_covers_summary_tokens(self):
        examples = generate_synthetic_corpus(Prng(3), 10, 3)
        vocab = corpus_vocab(examples)
        assert vocab.encode(SUMMARY_GLUE) != 3
        for ex in examples[:3]:
            assert all(vocab.encode(t) != 3 for t in ex.summary_tokens)
