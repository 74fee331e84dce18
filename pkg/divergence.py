# divergence.py
import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Hashable, Iterable, Mapping, Optional, Sequence, Tuple, Union

from errors import ConfigError, IncompatibleHistogramError, UndefinedMetricError
from textcore import (
    PUNCTUATION,
    SubsetLexicon,
    TokenizedCorpus,
    check_aligned,
    is_content_token,
    partition,
)

logger = logging.getLogger(__name__)

LENGTH = "length"
HistogramKind = Union[int, str]


@dataclass(frozen=True)
class NgramHistogram:
    """Counts of order-n surface tuples; zero-count keys are never stored."""

    order: int
    counts: Mapping[Tuple[str, ...], int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def normalize(self) -> "NormalizedHistogram":
        return _normalize(self.order, self.counts)


@dataclass(frozen=True)
class LengthHistogram:
    counts: Mapping[int, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def normalize(self) -> "NormalizedHistogram":
        return _normalize(LENGTH, self.counts)


@dataclass(frozen=True)
class NormalizedHistogram:
    kind: HistogramKind
    weights: Mapping[Hashable, float]


def _normalize(kind: HistogramKind, counts: Mapping[Hashable, int]) -> NormalizedHistogram:
    total = sum(counts.values())
    if total <= 0:
        raise UndefinedMetricError(f"cannot normalize an empty {kind} histogram")
    return NormalizedHistogram(kind, {k: c / total for k, c in counts.items()})


def ngrams(tokens: Sequence[str], n: int) -> Iterable[Tuple[str, ...]]:
    return (tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def ngram_histogram(corpus: TokenizedCorpus, n: int) -> NgramHistogram:
    """
    Count within-sentence contiguous n-grams, without BOS/EOS padding.

    Args:
        corpus (TokenizedCorpus): Input corpus.
        n (int): Order, at least 1.

    Returns:
        NgramHistogram: Surface-form n-gram counts.
    """
    if n < 1:
        raise ConfigError(f"n-gram order must be >= 1, got {n}")
    counts: Counter = Counter()
    for tokens in corpus.surfaces():
        counts.update(ngrams(tokens, n))
    return NgramHistogram(order=n, counts=dict(counts))


def length_histogram(corpus: TokenizedCorpus) -> LengthHistogram:
    return LengthHistogram(dict(Counter(len(s) for s in corpus.sentences)))


def _sort_key(key: Hashable):
    return (type(key).__name__, key)


def l1_distance(p: NormalizedHistogram, q: NormalizedHistogram) -> float:
    """
    L1 distance over the union of both supports.

    Args:
        p (NormalizedHistogram): First histogram.
        q (NormalizedHistogram): Second histogram of the same kind.

    Returns:
        float: Sum of absolute weight differences, in [0, 2].
    """
    if p.kind != q.kind:
        raise IncompatibleHistogramError(f"cannot compare {p.kind!r} histogram with {q.kind!r}")
    keys = sorted(set(p.weights) | set(q.weights), key=_sort_key)
    return math.fsum(abs(p.weights.get(k, 0.0) - q.weights.get(k, 0.0)) for k in keys)


def ngram_l1(a: TokenizedCorpus, b: TokenizedCorpus, n: int) -> float:
    return l1_distance(ngram_histogram(a, n).normalize(), ngram_histogram(b, n).normalize())


def length_l1(a: TokenizedCorpus, b: TokenizedCorpus) -> float:
    return l1_distance(length_histogram(a).normalize(), length_histogram(b).normalize())


def class_count(corpus: TokenizedCorpus, lexicon: SubsetLexicon, name: str) -> int:
    forms = lexicon.forms(name)
    return sum(1 for tokens in corpus.surfaces() for t in tokens if t.casefold() in forms)


def subset_frequency(corpus: TokenizedCorpus, lexicon: SubsetLexicon, name: str) -> float:
    """
    Share of all tokens that belong to a lexicon class.

    Args:
        corpus (TokenizedCorpus): Input corpus.
        lexicon (SubsetLexicon): Class definitions.
        name (str): Class name, e.g. "punctuation".

    Returns:
        float: Class token count over total token count.
    """
    total = corpus.token_count()
    if total == 0:
        raise UndefinedMetricError(f"{corpus.provenance} has no tokens")
    return class_count(corpus, lexicon, name) / total


def punctuation_ratio(output: TokenizedCorpus, reference: TokenizedCorpus, lexicon: SubsetLexicon) -> float:
    """Punctuation frequency of the output relative to the reference."""
    ref_freq = subset_frequency(reference, lexicon, PUNCTUATION)
    if ref_freq == 0:
        raise UndefinedMetricError("reference has no punctuation")
    return subset_frequency(output, lexicon, PUNCTUATION) / ref_freq


def female_fraction(corpus: TokenizedCorpus, lexicon: SubsetLexicon, side: str) -> Optional[float]:
    """
    Fraction of gendered pronouns that are female.

    Returns:
        Optional[float]: None when the corpus has no gendered pronouns.
    """
    female_name, male_name = lexicon.gender_classes(side)
    female = class_count(corpus, lexicon, female_name)
    male = class_count(corpus, lexicon, male_name)
    if female + male == 0:
        return None
    return female / (female + male)


def copy_rate(source: TokenizedCorpus, output: TokenizedCorpus, lexicon: SubsetLexicon) -> float:
    """
    Fraction of sentences copying more than half of their content unigrams.

    Punctuation and numeric tokens are dropped from both sides; an output
    with no content tokens never counts as a copy.

    Args:
        source (TokenizedCorpus): Source sentences.
        output (TokenizedCorpus): Aligned output sentences.
        lexicon (SubsetLexicon): Supplies the punctuation class.

    Returns:
        float: Copies over sentences.
    """
    check_aligned(source, output)
    if len(output) == 0:
        raise UndefinedMetricError("copy rate of an empty corpus")
    copies = 0
    for src_tokens, out_tokens in zip(source.surfaces(), output.surfaces()):
        out_content = Counter(t for t in out_tokens if is_content_token(t, lexicon))
        if not out_content:
            continue
        src_content = Counter(t for t in src_tokens if is_content_token(t, lexicon))
        overlap = sum((out_content & src_content).values()) / sum(out_content.values())
        if overlap > 0.5:
            copies += 1
    return copies / len(output)


def distinct_ngram_ratio(corpus: TokenizedCorpus, n: int) -> float:
    """Unique order-n tuples over all order-n tuples."""
    histogram = ngram_histogram(corpus, n)
    if histogram.total == 0:
        raise UndefinedMetricError(f"no {n}-grams in {corpus.provenance}")
    return len(histogram.counts) / histogram.total


def partition_baseline(corpus: TokenizedCorpus, n: HistogramKind, seed: int) -> float:
    """
    L1 distance between the two halves of a seeded partition.

    Args:
        corpus (TokenizedCorpus): Reference corpus, at least two sentences.
        n (int | str): N-gram order, or "length" for sentence lengths.
        seed (int): Partition seed.

    Returns:
        float: The sampling-noise floor for the chosen histogram.
    """
    first, second = partition(corpus, 0.5, seed)
    if n == LENGTH:
        return length_l1(first, second)
    return ngram_l1(first, second, int(n))


def reference_line(train: TokenizedCorpus, valid: TokenizedCorpus, orders: Sequence[int]) -> Dict[str, float]:
    """L1 distances between a training reference corpus and the validation references."""
    line = {f"l1_{n}gram": ngram_l1(train, valid, n) for n in orders}
    line["l1_length"] = length_l1(train, valid)
    return line
