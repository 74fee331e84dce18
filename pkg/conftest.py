from pathlib import Path

import pytest

from textcore import ParallelCorpus, builtin_lexicon, corpus_from_lines, load_parallel

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixture_path():
    return lambda name: str(FIXTURES / name)


@pytest.fixture
def lexicon():
    return builtin_lexicon()


@pytest.fixture
def make_corpus():
    def build(*lines, vocab=None):
        return corpus_from_lines(lines, vocab=vocab)

    return build


@pytest.fixture
def make_parallel():
    """Source, one reference and a hypothesis from equal-length line lists."""

    def build(src, ref, hyp=None):
        source = corpus_from_lines(src, provenance="src")
        reference = corpus_from_lines(ref, provenance="ref")
        hypothesis = None if hyp is None else corpus_from_lines(hyp, vocab=reference.vocab, provenance="hyp")
        return ParallelCorpus(source, (reference,), hypothesis)

    return build


@pytest.fixture
def toy_parallel():
    return load_parallel(str(FIXTURES / "toy.src"), [str(FIXTURES / "toy.ref")], str(FIXTURES / "toy.hyp"))
