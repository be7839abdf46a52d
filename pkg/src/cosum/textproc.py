"""Tokenization, sentence segmentation, vocabulary, and the synthetic corpus.

The corpus generator stands in for a real summarization dataset: every
document is built from a template with known copy structure, so each
example carries exact ground-truth tags for which source words the
summary used. Word pools are disjoint (topics / fillers / keywords), which
keeps that ground truth unambiguous: a topic or keyword appears in the
summary if and only if its sentence was drawn as important.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from cosum.rng import Prng

PAD, BOS, EOS, UNK, ELLIPSIS = 0, 1, 2, 3, 4
RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>", "...")
SENTENCE_TERMINATORS = (".", "!", "?")

# "..." must come first so it wins over single ".".
_TOKEN_RE = re.compile(r"\.\.\.|[.,!?'\"():;]|[^\s.,!?'\"():;]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, detach punctuation; "..." is one token."""
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


def split_sentences(tokens: list[str]) -> list[tuple[int, int]]:
    """Half-open token spans; a sentence ends after ".", "!" or "?"."""
    spans: list[tuple[int, int]] = []
    start = 0
    for i, tok in enumerate(tokens):
        if tok in SENTENCE_TERMINATORS:
            spans.append((start, i + 1))
            start = i + 1
    if start < len(tokens):
        spans.append((start, len(tokens)))
    return spans


@dataclass(frozen=True)
class Document:
    raw: str
    tokens: list[str]
    sentence_spans: list[tuple[int, int]]

    @classmethod
    def from_text(cls, text: str) -> "Document":
        tokens = tokenize(text)
        return cls(raw=text, tokens=tokens, sentence_spans=split_sentences(tokens))

    @property
    def n_sentences(self) -> int:
        return len(self.sentence_spans)

    def sentence_tokens(self, index: int) -> list[str]:
        start, stop = self.sentence_spans[index]
        return self.tokens[start:stop]


class Vocab:
    """Token/id bijection with fixed reserved ids 0..4."""

    def __init__(self, tokens_by_frequency: list[str]):
        self.id_to_token: list[str] = list(RESERVED_TOKENS)
        self.token_to_id: dict[str, int] = {
            tok: i for i, tok in enumerate(RESERVED_TOKENS)
        }
        for tok in tokens_by_frequency:
            if tok in self.token_to_id:
                continue
            self.token_to_id[tok] = len(self.id_to_token)
            self.id_to_token.append(tok)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def encode_tokens(self, tokens: list[str]) -> list[int]:
        return [self.encode(t) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    @property
    def terminator_ids(self) -> frozenset[int]:
        return frozenset(
            self.token_to_id[t] for t in SENTENCE_TERMINATORS if t in self.token_to_id
        )

    def to_config(self) -> list[str]:
        return list(self.id_to_token)

    @classmethod
    def from_config(cls, id_to_token: list[str]) -> "Vocab":
        if list(id_to_token[:5]) != list(RESERVED_TOKENS):
            raise ValueError("vocab config does not start with the reserved tokens")
        return cls(id_to_token[5:])


def build_vocab(token_lists, max_size: int) -> Vocab:
    """Frequency-ordered vocab, ties broken lexicographically."""
    if max_size <= 5:
        raise ValueError("max_size must exceed the 5 reserved ids")
    counts: dict[str, int] = {}
    for tokens in token_lists:
        for tok in tokens:
            if tok in RESERVED_TOKENS:
                continue
            counts[tok] = counts.get(tok, 0) + 1
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocab(ranked[: max_size - 5])


# ---------------------------------------------------------------------------
# Synthetic corpus with exact copy ground truth
# ---------------------------------------------------------------------------

TOPIC_POOL = (
    "nasa", "scientists", "researchers", "mars", "venus", "jupiter",
    "saturn", "europa", "titan", "luna", "comet", "asteroid",
    "rover", "lander", "orbiter", "telescope", "probe", "station",
    "crew", "mission", "agency", "observatory", "satellite", "astronomers",
)

FILLER_POOL = (
    "the", "is", "a", "of", "on", "in",
    "near", "was", "has", "very", "still", "quite",
)

_REAL_KEYWORDS = (
    "water", "ocean", "ice", "lava", "dust", "crater", "canyon", "valley",
    "ridge", "plain", "basin", "delta", "river", "lake", "cloud", "storm",
    "wind", "frost", "snow", "vapor", "mineral", "iron", "silica", "carbon",
    "methane", "oxygen", "hydrogen", "salt", "clay", "sand", "gravel", "rock",
    "magma", "plasma", "aurora", "crust",
)

_SYLLABLES = ("ba", "de", "ki", "lo", "mu", "na", "po", "ru", "sa", "ti", "ve", "zo")

SUMMARY_GLUE = "says"


def _keyword_pool(n: int) -> tuple[str, ...]:
    pool = list(_REAL_KEYWORDS)
    taken = set(pool) | set(TOPIC_POOL) | set(FILLER_POOL) | {SUMMARY_GLUE}
    for a in _SYLLABLES:
        for b in _SYLLABLES:
            if len(pool) >= n:
                return tuple(pool[:n])
            word = a + b
            if word not in taken:
                pool.append(word)
                taken.add(word)
    for a in _SYLLABLES:
        for b in _SYLLABLES:
            for c in _SYLLABLES:
                if len(pool) >= n:
                    return tuple(pool[:n])
                word = a + b + c
                if word not in taken:
                    pool.append(word)
                    taken.add(word)
    if len(pool) < n:
        raise ValueError(f"cannot build {n} distinct keywords")
    return tuple(pool[:n])


@dataclass(frozen=True)
class VocabSpec:
    n_topics: int = 24
    n_fillers: int = 12
    n_keywords: int = 180
    min_fillers: int = 2
    max_fillers: int = 4

    def pools(self) -> tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]:
        if self.n_topics > len(TOPIC_POOL):
            raise ValueError(f"at most {len(TOPIC_POOL)} topics available")
        if self.n_fillers > len(FILLER_POOL):
            raise ValueError(f"at most {len(FILLER_POOL)} fillers available")
        return (
            TOPIC_POOL[: self.n_topics],
            FILLER_POOL[: self.n_fillers],
            _keyword_pool(self.n_keywords),
        )


@dataclass
class CorpusExample:
    document: Document
    summary_tokens: list[str]
    gold_tags: list[int]
    # Which summary positions were copied from the source (vs template glue).
    summary_copied: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len(self.gold_tags) != len(self.document.tokens):
            raise ValueError("gold_tags length != document token count")


def generate_synthetic_corpus(
    prng: Prng,
    n_examples: int,
    n_sentences_per_doc: int,
    vocab_spec: VocabSpec | None = None,
) -> list[CorpusExample]:
    """Template documents with a uniformly chosen important-sentence subset.

    Sentence template: ``<topic> <fillers...> <keyword> .``
    Summary, per important sentence in order: ``<topic> says <keyword> .``
    Gold tags mark exactly the topic and keyword of important sentences.
    """
    if n_sentences_per_doc < 2:
        raise ValueError("documents need at least 2 sentences")
    spec = vocab_spec or VocabSpec()
    topics, fillers, keywords = spec.pools()
    if n_sentences_per_doc > len(keywords) or n_sentences_per_doc > len(topics):
        raise ValueError(
            "vocab spec too small to supply distinct keywords for every sentence"
        )

    examples: list[CorpusExample] = []
    n_important = math.ceil(n_sentences_per_doc / 2)
    for _ in range(n_examples):
        doc_topics = [
            topics[i] for i in prng.sample_indices(len(topics), n_sentences_per_doc)
        ]
        doc_keywords = [
            keywords[i] for i in prng.sample_indices(len(keywords), n_sentences_per_doc)
        ]
        important = sorted(prng.sample_indices(n_sentences_per_doc, n_important))

        tokens: list[str] = []
        tags: list[int] = []
        spans: list[tuple[int, int]] = []
        topic_pos: list[int] = []
        keyword_pos: list[int] = []
        for s in range(n_sentences_per_doc):
            start = len(tokens)
            topic_pos.append(len(tokens))
            tokens.append(doc_topics[s])
            tags.append(0)
            n_fill = spec.min_fillers + prng.randint(
                spec.max_fillers - spec.min_fillers + 1
            )
            for _ in range(n_fill):
                tokens.append(fillers[prng.randint(len(fillers))])
                tags.append(0)
            keyword_pos.append(len(tokens))
            tokens.append(doc_keywords[s])
            tags.append(0)
            tokens.append(".")
            tags.append(0)
            spans.append((start, len(tokens)))

        summary: list[str] = []
        copied: list[int] = []
        for s in important:
            tags[topic_pos[s]] = 1
            tags[keyword_pos[s]] = 1
            summary.extend([doc_topics[s], SUMMARY_GLUE, doc_keywords[s], "."])
            copied.extend([1, 0, 1, 0])

        doc = Document(
            raw=detokenize(tokens), tokens=tokens, sentence_spans=spans
        )
        examples.append(
            CorpusExample(
                document=doc,
                summary_tokens=summary,
                gold_tags=tags,
                summary_copied=copied,
            )
        )
    return examples


# ---------------------------------------------------------------------------
# Corpus file format: JSON Lines, UTF-8, LF
# ---------------------------------------------------------------------------


def save_corpus(path: str | Path, examples: list[CorpusExample]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            record = {
                "document": ex.document.raw,
                "summary": detokenize(ex.summary_tokens),
                "tags": list(ex.gold_tags),
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_corpus(path: str | Path) -> list[CorpusExample]:
    examples: list[CorpusExample] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            doc = Document.from_text(record["document"])
            tags = [int(t) for t in record["tags"]]
            if len(tags) != len(doc.tokens):
                raise ValueError(f"line {line_no}: tags length != token count")
            examples.append(
                CorpusExample(
                    document=doc,
                    summary_tokens=tokenize(record["summary"]),
                    gold_tags=tags,
                )
            )
    return examples


def corpus_vocab(examples: list[CorpusExample], max_size: int = 2000) -> Vocab:
    """Vocabulary over documents and summaries of a corpus."""
    streams = [ex.document.tokens for ex in examples]
    streams += [ex.summary_tokens for ex in examples]
    return build_vocab(streams, max_size)
