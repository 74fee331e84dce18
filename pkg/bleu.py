# bleu.py
import logging
import math
from collections import Counter
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from divergence import ngrams
from errors import ConfigError, UndefinedMetricError
from textcore import ParallelCorpus, TokenizedCorpus, check_aligned

logger = logging.getLogger(__name__)

NGRAM_ORDER = 4
SMOOTHING_METHODS = ("add-one-on-zero",)
BLEU_BIN_WIDTH = 10
HIGH_BLEU = 30.0

DEFAULT_FREQUENCY_EDGES: Tuple[int, ...] = (0, 1, 2, 4, 8, 16, 64)
DEFAULT_LENGTH_EDGES: Tuple[int, ...] = (0, 10, 20, 30, 40, 50, 60)


class BleuScore(BaseModel):
    model_config = ConfigDict(frozen=True)

    score: float
    precisions: List[float]
    brevity_penalty: float
    hyp_length: int
    ref_length: int


class Bucket(BaseModel):
    model_config = ConfigDict(frozen=True)

    low: float
    high: Optional[float]  # None: unbounded
    value: Optional[float]  # None: no support
    support: int


class BucketedReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    statistic: str
    buckets: List[Bucket]


class SentenceBleuHistogram(BaseModel):
    model_config = ConfigDict(frozen=True)

    bin_edges: List[float]
    counts: List[int]
    mean: float
    variance: float
    share_at_least_30: float
    sentences: int


### SUFFICIENT STATISTICS ###
def _ref_stats(hyp_len: int, refs: Sequence[Sequence[str]]) -> Tuple[Counter, int]:
    """Maximum reference n-gram counts and the closest reference length (shorter wins ties)."""
    max_counts: Counter = Counter()
    closest_len, closest_diff = None, None
    for ref in refs:
        diff = abs(hyp_len - len(ref))
        if closest_diff is None or diff < closest_diff or (diff == closest_diff and len(ref) < closest_len):
            closest_diff, closest_len = diff, len(ref)
        for n in range(1, NGRAM_ORDER + 1):
            for gram, count in Counter(ngrams(ref, n)).items():
                if count > max_counts[gram]:
                    max_counts[gram] = count
    return max_counts, closest_len or 0


def sentence_stats(hyp: Sequence[str], refs: Sequence[Sequence[str]]) -> Tuple[List[int], List[int], int, int]:
    """
    Clipped n-gram matches and totals for one hypothesis.

    Returns:
        Tuple: (matches per order, totals per order, hypothesis length,
        closest reference length).
    """
    max_ref, ref_len = _ref_stats(len(hyp), refs)
    matches, totals = [0] * NGRAM_ORDER, [0] * NGRAM_ORDER
    for n in range(1, NGRAM_ORDER + 1):
        counts = Counter(ngrams(hyp, n))
        totals[n - 1] = sum(counts.values())
        matches[n - 1] = sum(min(c, max_ref[g]) for g, c in counts.items())
    return matches, totals, len(hyp), ref_len


def _brevity_penalty(hyp_len: int, ref_len: int) -> float:
    if hyp_len == 0:
        return 0.0
    if hyp_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / hyp_len)


def _geometric(precisions: Sequence[float]) -> float:
    return math.exp(math.fsum(math.log(p) for p in precisions) / len(precisions))


### CORPUS AND SENTENCE BLEU ###
def corpus_bleu(hyp: TokenizedCorpus, refs: Sequence[TokenizedCorpus]) -> BleuScore:
    """
    Unsmoothed 4-gram corpus BLEU.

    Args:
        hyp (TokenizedCorpus): System output, at least one sentence.
        refs (Sequence[TokenizedCorpus]): One or more aligned references.

    Returns:
        BleuScore: Score in [0, 100]; 0 whenever any modified precision is 0.
    """
    check_aligned(hyp, *refs)
    if len(hyp) == 0:
        raise UndefinedMetricError("BLEU of an empty hypothesis corpus")
    matches, totals = [0] * NGRAM_ORDER, [0] * NGRAM_ORDER
    hyp_len = ref_len = 0
    ref_surfaces = [r.surfaces() for r in refs]
    for i, tokens in enumerate(hyp.surfaces()):
        m, t, h, r = sentence_stats(tokens, [rs[i] for rs in ref_surfaces])
        for n in range(NGRAM_ORDER):
            matches[n] += m[n]
            totals[n] += t[n]
        hyp_len += h
        ref_len += r
    precisions = [m / t if t else 0.0 for m, t in zip(matches, totals)]
    bp = _brevity_penalty(hyp_len, ref_len)
    score = 0.0 if min(precisions) == 0.0 or bp == 0.0 else bp * _geometric(precisions) * 100.0
    return BleuScore(
        score=score, precisions=precisions, brevity_penalty=bp, hyp_length=hyp_len, ref_length=ref_len
    )


def sentence_bleu(
    hyp: Sequence[str], refs: Sequence[Sequence[str]], smoothing: str = "add-one-on-zero"
) -> float:
    """
    Smoothed single-sentence BLEU.

    Orders without hypothesis n-grams are skipped (effective order); an order
    with zero matches uses precision 1 / (2 * hypothesis n-gram count).

    Args:
        hyp (Sequence[str]): Hypothesis tokens.
        refs (Sequence[Sequence[str]]): Reference token sequences.
        smoothing (str): Smoothing rule; only "add-one-on-zero".

    Returns:
        float: Score in [0, 100]; 0 for an empty hypothesis.
    """
    if smoothing not in SMOOTHING_METHODS:
        raise ConfigError(f"unknown smoothing {smoothing!r}")
    if not hyp:
        return 0.0
    matches, totals, hyp_len, ref_len = sentence_stats(hyp, refs)
    precisions = []
    for m, t in zip(matches, totals):
        if t == 0:
            break
        precisions.append(m / t if m else 1.0 / (2 * t))
    return _brevity_penalty(hyp_len, ref_len) * _geometric(precisions) * 100.0


def sentence_scores(parallel: ParallelCorpus) -> List[float]:
    if parallel.hypothesis is None:
        raise UndefinedMetricError("parallel corpus carries no hypothesis")
    refs = [r.surfaces() for r in parallel.references]
    return [sentence_bleu(h, [r[i] for r in refs]) for i, h in enumerate(parallel.hypothesis.surfaces())]


def sentence_bleu_histogram(parallel: ParallelCorpus) -> SentenceBleuHistogram:
    """
    Sentence-BLEU distribution in bins of width 10 over [0, 100].

    Returns:
        SentenceBleuHistogram: Bin counts, population variance, and the share
        of sentences scoring 30 or higher.
    """
    scores = np.asarray(sentence_scores(parallel), dtype=np.float64)
    if scores.size == 0:
        raise UndefinedMetricError("sentence BLEU histogram of an empty corpus")
    bins = np.minimum((scores // BLEU_BIN_WIDTH).astype(int), 100 // BLEU_BIN_WIDTH - 1)
    counts = np.bincount(bins, minlength=100 // BLEU_BIN_WIDTH)
    return SentenceBleuHistogram(
        bin_edges=[float(e) for e in range(0, 101, BLEU_BIN_WIDTH)],
        counts=[int(c) for c in counts],
        mean=float(np.mean(scores)),
        variance=float(np.var(scores)),
        share_at_least_30=float(np.mean(scores >= HIGH_BLEU)),
        sentences=int(scores.size),
    )


### BUCKETED ANALYSES ###
def _bucket_bounds(edges: Sequence[float]) -> List[Tuple[float, Optional[float]]]:
    if list(edges) != sorted(set(edges)) or not edges:
        raise ConfigError(f"bucket edges must be strictly increasing, got {list(edges)}")
    return [(edges[i], edges[i + 1] if i + 1 < len(edges) else None) for i in range(len(edges))]


def _bucket_index(value: float, bounds: List[Tuple[float, Optional[float]]]) -> Optional[int]:
    for i, (low, high) in enumerate(bounds):
        if value >= low and (high is None or value < high):
            return i
    return None


def word_f1_table(hyp: TokenizedCorpus, ref: TokenizedCorpus) -> Dict[str, Tuple[int, int, int, float]]:
    """
    Per-word clipped matches.

    Returns:
        Dict[str, Tuple[int, int, int, float]]: word -> (matched, hypothesis
        count, reference count, F1).
    """
    check_aligned(hyp, ref)
    matched: Counter = Counter()
    hyp_total: Counter = Counter()
    ref_total: Counter = Counter()
    for h, r in zip(hyp.surfaces(), ref.surfaces()):
        hc, rc = Counter(h), Counter(r)
        hyp_total.update(hc)
        ref_total.update(rc)
        matched.update(hc & rc)
    table = {}
    for word in sorted(set(hyp_total) | set(ref_total)):
        m = matched[word]
        precision = m / hyp_total[word] if hyp_total[word] else 0.0
        recall = m / ref_total[word] if ref_total[word] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        table[word] = (m, hyp_total[word], ref_total[word], f1)
    return table


def word_f1_by_frequency(
    hyp: TokenizedCorpus, ref: TokenizedCorpus, bucket_edges: Sequence[float] = DEFAULT_FREQUENCY_EDGES
) -> BucketedReport:
    """
    Macro-averaged word F1, bucketed by reference frequency.

    Args:
        hyp (TokenizedCorpus): System output.
        ref (TokenizedCorpus): Aligned reference.
        bucket_edges (Sequence[float]): Lower bucket edges; the last bucket
            is unbounded.

    Returns:
        BucketedReport: One bucket per edge with mean F1 and word count.
    """
    bounds = _bucket_bounds(bucket_edges)
    per_bucket: List[List[float]] = [[] for _ in bounds]
    for _, (_, _, ref_count, f1) in word_f1_table(hyp, ref).items():
        index = _bucket_index(ref_count, bounds)
        if index is not None:
            per_bucket[index].append(f1)
    buckets = [
        Bucket(low=low, high=high, value=math.fsum(v) / len(v) if v else None, support=len(v))
        for (low, high), v in zip(bounds, per_bucket)
    ]
    return BucketedReport(statistic="word_f1", buckets=buckets)


def bleu_by_length(parallel: ParallelCorpus, bucket_edges: Sequence[float] = DEFAULT_LENGTH_EDGES) -> BucketedReport:
    """
    Corpus BLEU of the sentence pairs in each reference-length bucket.

    Returns:
        BucketedReport: Per-bucket BLEU; empty buckets have no value.
    """
    if parallel.hypothesis is None:
        raise UndefinedMetricError("parallel corpus carries no hypothesis")
    bounds = _bucket_bounds(bucket_edges)
    members: List[List[int]] = [[] for _ in bounds]
    for i, sentence in enumerate(parallel.reference.sentences):
        index = _bucket_index(len(sentence), bounds)
        if index is not None:
            members[index].append(i)
    buckets = []
    for (low, high), indices in zip(bounds, members):
        value = None
        if indices:
            sub = parallel.subset(indices)
            value = corpus_bleu(sub.hypothesis, sub.references).score
        buckets.append(Bucket(low=low, high=high, value=value, support=len(indices)))
    return BucketedReport(statistic="bleu", buckets=buckets)
