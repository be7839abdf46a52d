import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
GOLDENS = TESTS / "goldens"
FIXTURES = TESTS / "fixtures"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)


def _ensure_fixtures() -> None:
    if not (FIXTURES / "forward.ckpt").exists():
        sys.path.insert(0, str(TESTS))
        import make_goldens

        make_goldens.main()


@pytest.fixture(scope="session")
def goldens_dir() -> Path:
    return GOLDENS


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    _ensure_fixtures()
    return FIXTURES


@pytest.fixture(scope="session")
def fixture_engine(fixtures_dir):
    from cosum.service import engine_from_dir

    return engine_from_dir(fixtures_dir)


@pytest.fixture(scope="session")
def fixture_corpus(fixtures_dir):
    from cosum.textproc import load_corpus

    return load_corpus(fixtures_dir / "corpus.jsonl")


@pytest.fixture(scope="session")
def fixture_document(fixtures_dir):
    return (fixtures_dir / "document.txt").read_text(encoding="utf-8").strip()


@pytest.fixture(scope="session")
def tiny_engine():
    """Small untrained engine for contract tests that need no learned behavior."""
    from cosum.attribution import AttributionConfig, AttributionModel
    from cosum.model import CopyGatedSeq2Seq, ModelConfig
    from cosum.rng import Prng
    from cosum.session import Engine
    from cosum.textproc import corpus_vocab, generate_synthetic_corpus

    examples = generate_synthetic_corpus(Prng(123), 20, 3)
    vocab = corpus_vocab(examples)
    model = CopyGatedSeq2Seq.create(
        ModelConfig(len(vocab), 10, 12, max_tokens_per_sentence=8), seed=5
    )
    attribution = AttributionModel.create(
        AttributionConfig(len(vocab), 10, 12), seed=6
    )
    return Engine(model=model, attribution=attribution, vocab=vocab), examples
