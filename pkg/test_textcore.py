import numpy as np
import pytest

from errors import AlignmentError, ConfigError, IngestionError, LexiconError, PartitionError
from textcore import (
    NUMERIC,
    ParallelCorpus,
    SubsetLexicon,
    Vocabulary,
    classify_token,
    corpus_from_lines,
    is_content_token,
    is_punctuation_token,
    load_lexicon,
    load_parallel,
    partition,
    partition_indices,
    read_corpus,
    read_lines,
    tokenize_words,
)


def test_read_lines_strips_crlf(tmp_path):
    path = tmp_path / "crlf.txt"
    path.write_bytes(b"a b\r\nc\n\n")
    assert read_lines(str(path)) == ["a b", "c", ""]


def test_invalid_utf8_names_the_line(fixture_path):
    with pytest.raises(IngestionError) as info:
        read_lines(fixture_path("bad_utf8.txt"))
    assert info.value.line_number == 2
    assert "bad_utf8.txt:2" in str(info.value)


def test_empty_line_is_an_empty_sentence(tmp_path):
    path = tmp_path / "blank.txt"
    path.write_text("one two\n\nthree\n", encoding="utf-8")
    corpus = read_corpus(str(path))
    assert len(corpus) == 3
    assert corpus.surface(1) == ()
    assert corpus.token_count() == 3


def test_whitespace_tokenization():
    assert tokenize_words("a  b\tc ") == ["a", "b", "c"]
    assert tokenize_words("") == []


def test_simple_tokenization_detaches_punctuation():
    assert tokenize_words("Hello, world!", mode="simple") == ["Hello", ",", "world", "!"]
    assert tokenize_words("wait...", mode="simple") == ["wait", "..."]
    assert tokenize_words('"Hi!"', mode="simple") == ['"', "Hi", "!", '"']
    assert tokenize_words("3.5 ?!", mode="simple") == ["3.5", "?!"]


def test_unknown_tokenization_mode():
    with pytest.raises(ConfigError):
        tokenize_words("a b", mode="sentencepiece")


def test_vocabulary_reserves_boundary_symbols():
    vocab = Vocabulary()
    assert vocab.intern("cat") == 3
    assert vocab.intern("cat") == 3
    assert vocab.lookup("dog") == vocab.unk_id
    assert vocab.forms() == ("cat",)


@pytest.mark.parametrize("form", ["<s>", "</s>", "<unk>"])
def test_reserved_symbols_are_not_corpus_tokens(form):
    with pytest.raises(IngestionError):
        Vocabulary().intern(form)
    with pytest.raises(IngestionError):
        corpus_from_lines([f"{form} a"])


def test_parallel_files_must_align(fixture_path):
    with pytest.raises(AlignmentError) as info:
        load_parallel(fixture_path("toy.src"), [fixture_path("toy.ref")], fixture_path("short.ref"))
    message = str(info.value)
    assert "12" in message and "3" in message
    assert info.value.exit_code == 2


def test_references_share_target_vocabulary(toy_parallel):
    assert toy_parallel.reference.vocab is toy_parallel.hypothesis.vocab
    assert toy_parallel.source.vocab is not toy_parallel.reference.vocab
    assert len(toy_parallel) == 12


def test_parallel_needs_a_reference(make_corpus):
    with pytest.raises(AlignmentError):
        ParallelCorpus(make_corpus("a"), ())


def test_partition_is_disjoint_and_seeded(make_corpus):
    first, second = partition_indices(12, 0.5, seed=7)
    assert len(first) == 6 and len(second) == 6
    assert sorted(first + second) == list(range(12))
    assert first == sorted(first)
    assert partition_indices(12, 0.5, seed=7) == (first, second)
    corpus = make_corpus(*[f"s{i}" for i in range(12)])
    a, b = partition(corpus, 0.5, seed=7)
    assert [s[0] for s in a.surfaces()] == [f"s{i}" for i in first]
    assert [s[0] for s in b.surfaces()] == [f"s{i}" for i in second]


def test_partition_rejects_degenerate_splits():
    with pytest.raises(PartitionError):
        partition_indices(1, 0.5, 0)
    with pytest.raises(PartitionError):
        partition_indices(10, 0.0, 0)
    with pytest.raises(PartitionError):
        partition_indices(3, 0.1, 0)


def test_lexicon_override_file(fixture_path):
    lexicon = load_lexicon(fixture_path("lexicon.tsv"))
    assert "woman" in lexicon.forms("english-female")
    assert "he" in lexicon.forms("english-male")


def test_lexicon_rejects_gender_overlap():
    with pytest.raises(LexiconError):
        SubsetLexicon({"x-female": frozenset({"They"}), "x-male": frozenset({"they"})})


def test_lexicon_malformed_line(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("no tab here\n", encoding="utf-8")
    with pytest.raises(LexiconError):
        load_lexicon(str(path))


def test_gender_classes_unknown_side(lexicon):
    assert lexicon.gender_classes("german") == ("german-female", "german-male")
    with pytest.raises(LexiconError):
        lexicon.gender_classes("klingon")


def test_token_classes(lexicon):
    assert classify_token("She", lexicon) == frozenset({"english-female"})
    assert classify_token("3.5", lexicon) == frozenset({NUMERIC})
    assert is_punctuation_token("«")
    assert not is_content_token("«", lexicon)
    assert not is_content_token("...", lexicon)
    assert not is_content_token("1,000", lexicon)
    assert is_content_token("cat", lexicon)


def test_whitespace_detokenize_round_trip():
    rng = np.random.default_rng(3)
    alphabet = ["cat", "Haus", "3.5", ",", "...", "«", "straße", "'s", "日本", "!"]
    separators = [" ", "  ", "\t", " \t "]
    for _ in range(200):
        sentences = [
            [str(t) for t in rng.choice(alphabet, size=int(rng.integers(0, 8)))] for _ in range(int(rng.integers(1, 5)))
        ]
        lines = [
            str(rng.choice(separators)).join(tokens) + str(rng.choice(["", " ", "\t"])) for tokens in sentences
        ]
        corpus = corpus_from_lines(lines)
        for i, tokens in enumerate(sentences):
            assert corpus.detokenize(i) == " ".join(tokens)
            assert tokenize_words(corpus.detokenize(i)) == tokens


def test_builtin_genders_never_overlap(lexicon):
    female = {name for name in lexicon.classes if name.endswith("-female")}
    male = {name for name in lexicon.classes if name.endswith("-male")}
    forms = sorted(set().union(*lexicon.classes.values()))
    rng = np.random.default_rng(5)
    for _ in range(500):
        form = str(rng.choice(forms))
        surface = "".join(c.upper() if rng.random() < 0.5 else c for c in form)
        classes = classify_token(surface, lexicon)
        assert not (classes & female and classes & male), surface
