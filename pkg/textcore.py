# textcore.py
import logging
import re
import threading
import unicodedata
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from errors import AlignmentError, ConfigError, IngestionError, LexiconError, PartitionError

logger = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
RESERVED = (BOS, EOS, UNK)

Sentence = Tuple[int, ...]

PUNCTUATION = "punctuation"
NUMERIC = "numeric"

BUILTIN_CLASSES: Dict[str, FrozenSet[str]] = {
    PUNCTUATION: frozenset({".", ",", "?", "!", '"', "'", "...", "!!!", "?!", "!?", ";", ":"}),
    "english-female": frozenset({"she", "her", "hers", "herself"}),
    "english-male": frozenset({"he", "him", "his", "himself"}),
    "german-female": frozenset({"sie"}),
    "german-male": frozenset({"er"}),
}

_NUMERIC_RE = re.compile(r"[+-]?\d+(?:[.,]\d+)*")


class Vocabulary:
    """
    Surface form <-> token id bijection.

    Ids 0, 1, 2 are reserved for BOS, EOS and UNK. Interning is guarded by a
    lock so ingestion may share a vocabulary between files of the same side.
    """

    def __init__(self, forms: Iterable[str] = ()):
        self._forms: List[str] = list(RESERVED)
        self._ids: Dict[str, int] = {form: i for i, form in enumerate(RESERVED)}
        self._lock = threading.Lock()
        for form in forms:
            self.intern(form)

    @property
    def bos_id(self) -> int:
        return 0

    @property
    def eos_id(self) -> int:
        return 1

    @property
    def unk_id(self) -> int:
        return 2

    def intern(self, form: str) -> int:
        if form in RESERVED:
            raise IngestionError("<vocabulary>", 0, f"reserved symbol {form!r} in corpus text")
        with self._lock:
            token_id = self._ids.get(form)
            if token_id is None:
                token_id = len(self._forms)
                self._forms.append(form)
                self._ids[form] = token_id
            return token_id

    def lookup(self, form: str) -> int:
        return self._ids.get(form, self.unk_id)

    def resolve(self, token_id: int) -> str:
        return self._forms[token_id]

    def forms(self) -> Tuple[str, ...]:
        """Corpus forms in interning order, reserved symbols excluded."""
        return tuple(self._forms[len(RESERVED):])

    def __len__(self) -> int:
        return len(self._forms)

    def __contains__(self, form: str) -> bool:
        return form in self._ids


@dataclass(frozen=True)
class TokenizedCorpus:
    vocab: Vocabulary
    sentences: Tuple[Sentence, ...]
    provenance: str = "<memory>"
    _surface_cache: List[Tuple[Tuple[str, ...], ...]] = field(
        default_factory=list, init=False, repr=False, compare=False
    )

    def __len__(self) -> int:
        return len(self.sentences)

    def surface(self, index: int) -> Tuple[str, ...]:
        return self.surfaces()[index]

    def surfaces(self) -> Tuple[Tuple[str, ...], ...]:
        """All sentences as surface-form tuples, resolved once."""
        if not self._surface_cache:
            resolve = self.vocab.resolve
            self._surface_cache.append(
                tuple(tuple(resolve(t) for t in sentence) for sentence in self.sentences)
            )
        return self._surface_cache[0]

    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def subset(self, indices: Sequence[int], provenance: Optional[str] = None) -> "TokenizedCorpus":
        return TokenizedCorpus(
            vocab=self.vocab,
            sentences=tuple(self.sentences[i] for i in indices),
            provenance=provenance or self.provenance,
        )

    def detokenize(self, index: int) -> str:
        return " ".join(self.surface(index))


@dataclass(frozen=True)
class ParallelCorpus:
    source: TokenizedCorpus
    references: Tuple[TokenizedCorpus, ...]
    hypothesis: Optional[TokenizedCorpus] = None

    def __post_init__(self):
        if not self.references:
            raise AlignmentError(self.source.provenance, len(self.source), "<references>", 0)
        members = [self.source, *self.references]
        if self.hypothesis is not None:
            members.append(self.hypothesis)
        check_aligned(*members)

    def __len__(self) -> int:
        return len(self.source)

    @property
    def reference(self) -> TokenizedCorpus:
        return self.references[0]

    def with_hypothesis(self, hypothesis: TokenizedCorpus) -> "ParallelCorpus":
        return ParallelCorpus(self.source, self.references, hypothesis)

    def subset(self, indices: Sequence[int]) -> "ParallelCorpus":
        return ParallelCorpus(
            source=self.source.subset(indices),
            references=tuple(r.subset(indices) for r in self.references),
            hypothesis=None if self.hypothesis is None else self.hypothesis.subset(indices),
        )


def check_aligned(*corpora: TokenizedCorpus) -> None:
    """Raise AlignmentError naming the first pair whose sentence counts differ."""
    first = corpora[0]
    for other in corpora[1:]:
        if len(other) != len(first):
            raise AlignmentError(first.provenance, len(first), other.provenance, len(other))


### TOKENIZATION ###
def _is_punct_char(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def is_punctuation_token(surface: str) -> bool:
    return bool(surface) and all(_is_punct_char(ch) for ch in surface)


def _split_punct_run(run: str) -> List[str]:
    if run in BUILTIN_CLASSES[PUNCTUATION]:
        return [run]
    return list(run)


def _detach(word: str) -> List[str]:
    if is_punctuation_token(word):
        return [word]
    start = 0
    while start < len(word) and _is_punct_char(word[start]):
        start += 1
    end = len(word)
    while end > start and _is_punct_char(word[end - 1]):
        end -= 1
    pieces: List[str] = []
    if start:
        pieces.extend(_split_punct_run(word[:start]))
    pieces.append(word[start:end])
    if end < len(word):
        pieces.extend(_split_punct_run(word[end:]))
    return pieces


def tokenize_words(line: str, mode: str = "whitespace") -> List[str]:
    """
    Split a line into surface tokens.

    Args:
        line (str): One sentence of text.
        mode (str): "whitespace" splits on runs of Unicode whitespace;
            "simple" additionally detaches leading/trailing punctuation.

    Returns:
        List[str]: Surface tokens, empty for an empty line.
    """
    words = line.split()
    if mode == "whitespace":
        return words
    if mode == "simple":
        out: List[str] = []
        for word in words:
            out.extend(_detach(word))
        return out
    raise ConfigError(f"unknown tokenization mode {mode!r}")


def tokenize(line: str, vocab: Vocabulary, mode: str = "whitespace") -> Sentence:
    return tuple(vocab.intern(w) for w in tokenize_words(line, mode))


def corpus_from_lines(
    lines: Iterable[str],
    vocab: Optional[Vocabulary] = None,
    mode: str = "whitespace",
    provenance: str = "<memory>",
) -> TokenizedCorpus:
    vocab = vocab if vocab is not None else Vocabulary()
    sentences = tuple(tokenize(line, vocab, mode) for line in lines)
    return TokenizedCorpus(vocab=vocab, sentences=sentences, provenance=provenance)


def corpus_from_tokens(
    sentences: Iterable[Sequence[str]],
    vocab: Optional[Vocabulary] = None,
    provenance: str = "<memory>",
) -> TokenizedCorpus:
    vocab = vocab if vocab is not None else Vocabulary()
    encoded = tuple(tuple(vocab.intern(w) for w in sentence) for sentence in sentences)
    return TokenizedCorpus(vocab=vocab, sentences=encoded, provenance=provenance)


### INGESTION ###
def read_lines(path: str) -> List[str]:
    """Read a UTF-8 corpus file, one sentence per line, LF or CRLF."""
    with open(path, "rb") as f:
        data = f.read()
    raw_lines = data.split(b"\n")
    if raw_lines and raw_lines[-1] == b"":
        raw_lines.pop()
    lines: List[str] = []
    for number, raw in enumerate(raw_lines, start=1):
        if raw.endswith(b"\r"):
            raw = raw[:-1]
        try:
            lines.append(raw.decode("utf-8"))
        except UnicodeDecodeError as error:
            raise IngestionError(path, number, f"invalid UTF-8 ({error.reason})") from error
    return lines


def read_corpus(path: str, vocab: Optional[Vocabulary] = None, mode: str = "whitespace") -> TokenizedCorpus:
    corpus = corpus_from_lines(read_lines(path), vocab=vocab, mode=mode, provenance=path)
    logger.info("read %d sentences from %s", len(corpus), path)
    return corpus


def load_parallel(
    src_path: str,
    ref_paths: Sequence[str],
    hyp_path: Optional[str] = None,
    mode: str = "whitespace",
) -> ParallelCorpus:
    """
    Load aligned source, reference and optional hypothesis files.

    Args:
        src_path (str): Source-language file.
        ref_paths (Sequence[str]): One or more reference files.
        hyp_path (str, optional): System output file.
        mode (str): Tokenization mode for every file.

    Returns:
        ParallelCorpus: Aligned corpora; references and hypothesis share the
        target-side vocabulary.
    """
    source = read_corpus(src_path, Vocabulary(), mode)
    target_vocab = Vocabulary()
    references = tuple(read_corpus(p, target_vocab, mode) for p in ref_paths)
    hypothesis = read_corpus(hyp_path, target_vocab, mode) if hyp_path else None
    return ParallelCorpus(source=source, references=references, hypothesis=hypothesis)


### PARTITIONING ###
def partition_indices(count: int, fraction: float, seed: int) -> Tuple[List[int], List[int]]:
    if not 0.0 < fraction < 1.0:
        raise PartitionError(f"fraction must lie in (0, 1), got {fraction}")
    if count < 2:
        raise PartitionError(f"need at least 2 sentences to partition, got {count}")
    first_size = round(fraction * count)
    if first_size <= 0 or first_size >= count:
        raise PartitionError(f"fraction {fraction} of {count} sentences leaves an empty part")
    order = np.random.default_rng(seed).permutation(count)
    return sorted(int(i) for i in order[:first_size]), sorted(int(i) for i in order[first_size:])


def partition(corpus: TokenizedCorpus, fraction: float, seed: int) -> Tuple[TokenizedCorpus, TokenizedCorpus]:
    """
    Split a corpus into two sentence-disjoint parts under a seeded shuffle.

    Args:
        corpus (TokenizedCorpus): Corpus with at least two sentences.
        fraction (float): Share of sentences in the first part, in (0, 1).
        seed (int): Shuffle seed.

    Returns:
        Tuple[TokenizedCorpus, TokenizedCorpus]: Both parts, each keeping
        the corpus line order.
    """
    first, second = partition_indices(len(corpus), fraction, seed)
    return (
        corpus.subset(first, f"{corpus.provenance}[part-a]"),
        corpus.subset(second, f"{corpus.provenance}[part-b]"),
    )


### LEXICONS ###
@dataclass(frozen=True)
class SubsetLexicon:
    classes: Mapping[str, FrozenSet[str]]

    def __post_init__(self):
        folded = {name: frozenset(f.casefold() for f in forms) for name, forms in self.classes.items()}
        object.__setattr__(self, "classes", folded)
        for name in folded:
            if name.endswith("-female"):
                side = name[: -len("-female")]
                male = folded.get(f"{side}-male")
                if male is not None and folded[name] & male:
                    overlap = sorted(folded[name] & male)
                    raise LexiconError(f"classes {side}-female and {side}-male share {overlap}")

    def __contains__(self, name: str) -> bool:
        return name in self.classes

    def forms(self, name: str) -> FrozenSet[str]:
        if name not in self.classes:
            raise LexiconError(f"unknown token class {name!r}")
        return self.classes[name]

    def gender_classes(self, side: str) -> Tuple[str, str]:
        female, male = f"{side}-female", f"{side}-male"
        if female not in self.classes or male not in self.classes:
            raise LexiconError(f"lexicon defines no gendered classes for side {side!r}")
        return female, male

    def with_overrides(self, overrides: Mapping[str, FrozenSet[str]]) -> "SubsetLexicon":
        merged = dict(self.classes)
        merged.update(overrides)
        return SubsetLexicon(merged)


def builtin_lexicon() -> SubsetLexicon:
    return SubsetLexicon(BUILTIN_CLASSES)


def load_lexicon(path: Optional[str] = None) -> SubsetLexicon:
    """
    Built-in lexicon, optionally overridden by a `class<TAB>form form ...` file.

    Args:
        path (str, optional): Override file; named classes replace built-ins.

    Returns:
        SubsetLexicon: The merged lexicon.
    """
    lexicon = builtin_lexicon()
    if not path:
        return lexicon
    overrides: Dict[str, FrozenSet[str]] = {}
    for number, line in enumerate(read_lines(path), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        name, sep, forms = line.partition("\t")
        if not sep or not name.strip():
            raise LexiconError(f"{path}:{number}: expected 'class-name<TAB>forms'")
        overrides[name.strip()] = frozenset(forms.split())
    logger.info("loaded %d lexicon classes from %s", len(overrides), path)
    return lexicon.with_overrides(overrides)


def is_numeric(surface: str) -> bool:
    return _NUMERIC_RE.fullmatch(surface) is not None


def classify_token(surface: str, lexicon: SubsetLexicon) -> FrozenSet[str]:
    """
    Token classes containing a surface form.

    Args:
        surface (str): Token text; matched after case-folding.
        lexicon (SubsetLexicon): Class definitions.

    Returns:
        FrozenSet[str]: Matching class names, plus "numeric" for number-like
        tokens.
    """
    folded = surface.casefold()
    names = {name for name, forms in lexicon.classes.items() if folded in forms}
    if is_numeric(surface):
        names.add(NUMERIC)
    return frozenset(names)


def is_content_token(surface: str, lexicon: SubsetLexicon) -> bool:
    """False for punctuation (lexicon or Unicode class) and numeric tokens."""
    if is_punctuation_token(surface) or is_numeric(surface):
        return False
    return surface.casefold() not in lexicon.forms(PUNCTUATION)
