# decoding.py
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Hashable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import softmax

from errors import ConfigError, EnumerationBudgetError
from models import EOS_ID, ConditionalSequenceModel
from textcore import TokenizedCorpus, Vocabulary, corpus_from_tokens

logger = logging.getLogger(__name__)

STRATEGIES = ("sample", "greedy", "beam")
ENUMERATION_BUDGET = 10**6

RandomSource = Union[int, np.random.Generator]


@dataclass(frozen=True)
class Hypothesis:
    """Decoded tokens (EOS excluded) with log-probability under the untempered model."""

    tokens: Tuple[int, ...]
    log_prob: float
    finished: bool

    def sequence(self) -> Tuple[int, ...]:
        return self.tokens + (EOS_ID,) if self.finished else self.tokens

    def rank_key(self) -> Tuple[float, Tuple[int, ...]]:
        return (-self.log_prob, self.sequence())


@dataclass(frozen=True)
class BeamResult:
    best: Hypothesis
    finalists: Tuple[Hypothesis, ...]


@dataclass(frozen=True)
class DecodeConfig:
    strategy: str = "sample"
    temperature: float = 1.0
    beam_width: int = 1
    max_length: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")
        if self.beam_width < 1:
            raise ConfigError(f"beam width must be >= 1, got {self.beam_width}")
        if self.max_length is not None and self.max_length < 0:
            raise ConfigError(f"max length must be >= 0, got {self.max_length}")

    @property
    def parameter(self) -> float:
        if self.strategy == "beam":
            return float(self.beam_width)
        if self.strategy == "greedy":
            return 0.0
        return float(self.temperature)


def _log(p: float) -> float:
    return math.log(p) if p > 0 else -math.inf


def _resolve_max_length(model: ConditionalSequenceModel, max_length: Optional[int]) -> int:
    return model.max_length if max_length is None else max_length


def sentence_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for sentence `index`; identical regardless of thread scheduling."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def temperature_transform(p: np.ndarray, temperature: float) -> np.ndarray:
    """
    Sharpen or flatten a distribution: q_i proportional to p_i ** (1 / T).

    Args:
        p (np.ndarray): Probability vector.
        temperature (float): T > 0; T = 0 is handled by the decoders.

    Returns:
        np.ndarray: Renormalized distribution, computed in log space.
    """
    if temperature <= 0:
        raise ConfigError(f"temperature_transform needs T > 0, got {temperature}")
    p = np.asarray(p, dtype=np.float64)
    if temperature == 1.0:
        return p.copy()
    with np.errstate(divide="ignore"):
        log_p = np.log(p)
    return softmax(log_p / temperature)


def greedy_decode(model: ConditionalSequenceModel, source: Hashable, max_length: Optional[int] = None) -> Hypothesis:
    """Argmax at every step; ties go to the lowest token id."""
    limit = _resolve_max_length(model, max_length)
    tokens: List[int] = []
    log_prob = 0.0
    for _ in range(limit):
        dist = model.next_distribution(source, tuple(tokens))
        token = int(np.argmax(dist))
        log_prob += _log(float(dist[token]))
        if token == EOS_ID:
            return Hypothesis(tuple(tokens), log_prob, True)
        tokens.append(token)
    return Hypothesis(tuple(tokens), log_prob, False)


def sample_decode(
    model: ConditionalSequenceModel,
    source: Hashable,
    temperature: float,
    seed: RandomSource = 0,
    max_length: Optional[int] = None,
) -> Hypothesis:
    """
    Ancestral sampling from the tempered next-token distribution.

    Args:
        model (ConditionalSequenceModel): Model to decode.
        source (Hashable): Source context key.
        temperature (float): T >= 0; T = 0 is exactly greedy decoding.
        seed (int | np.random.Generator): Seed or an existing stream.
        max_length (int, optional): Step cap; defaults to the model's.

    Returns:
        Hypothesis: Sampled tokens; log-probability under the untempered
        model.
    """
    if temperature < 0:
        raise ConfigError(f"temperature must be >= 0, got {temperature}")
    if temperature == 0:
        return greedy_decode(model, source, max_length)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    limit = _resolve_max_length(model, max_length)
    tokens: List[int] = []
    log_prob = 0.0
    for _ in range(limit):
        dist = model.next_distribution(source, tuple(tokens))
        token = int(rng.choice(dist.size, p=temperature_transform(dist, temperature)))
        log_prob += _log(float(dist[token]))
        if token == EOS_ID:
            return Hypothesis(tuple(tokens), log_prob, True)
        tokens.append(token)
    return Hypothesis(tuple(tokens), log_prob, False)


def beam_decode(
    model: ConditionalSequenceModel, source: Hashable, beam_width: int, max_length: Optional[int] = None
) -> BeamResult:
    """
    Length-synchronous beam search without length normalization.

    Each step expands every live hypothesis over the vocabulary and ranks
    candidates by raw cumulative log-probability (ties: lexicographic token
    ids). EOS candidates ranked ahead of the B-th live candidate move to the
    completed pool. Search stops once B hypotheses are complete, no live
    hypothesis remains, or the step cap is reached; at the cap the live
    hypotheses join the pool as length-capped.

    Args:
        model (ConditionalSequenceModel): Model to decode.
        source (Hashable): Source context key.
        beam_width (int): B >= 1.
        max_length (int, optional): Step cap; defaults to the model's.

    Returns:
        BeamResult: Highest-scoring hypothesis and the final pool.
    """
    if beam_width < 1:
        raise ConfigError(f"beam width must be >= 1, got {beam_width}")
    limit = _resolve_max_length(model, max_length)
    live = [Hypothesis((), 0.0, False)]
    completed: List[Hypothesis] = []
    capped = True
    for step in range(limit):
        candidates: List[Hypothesis] = []
        for hyp in live:
            dist = model.next_distribution(source, hyp.tokens)
            for token in np.flatnonzero(dist > 0):
                token = int(token)
                log_prob = hyp.log_prob + _log(float(dist[token]))
                if token == EOS_ID:
                    candidates.append(Hypothesis(hyp.tokens, log_prob, True))
                else:
                    candidates.append(Hypothesis(hyp.tokens + (token,), log_prob, False))
        candidates.sort(key=Hypothesis.rank_key)
        live = []
        for candidate in candidates:
            if len(live) >= beam_width:
                break
            if candidate.finished:
                if len(completed) < beam_width:
                    completed.append(candidate)
            else:
                live.append(candidate)
        logger.debug("beam step %d: %d live, %d completed", step, len(live), len(completed))
        if len(completed) >= beam_width or not live:
            capped = False
            break
    pool = completed + (live if capped else [])
    pool.sort(key=Hypothesis.rank_key)
    return BeamResult(best=pool[0], finalists=tuple(pool))


def brute_force_mode(
    model: ConditionalSequenceModel,
    source: Hashable,
    max_length: Optional[int] = None,
    budget: int = ENUMERATION_BUDGET,
) -> Hypothesis:
    """
    Exact mode over every EOS-terminated and length-capped sequence.

    Args:
        model (ConditionalSequenceModel): Model to search.
        source (Hashable): Source context key.
        max_length (int, optional): Step cap; defaults to the model's.
        budget (int): Maximum number of sequences to enumerate.

    Returns:
        Hypothesis: The highest-probability sequence (ties: lexicographic).
    """
    limit = _resolve_max_length(model, max_length)
    branching = model.vocab_size - 1
    total = sum(branching**length for length in range(limit)) + branching**limit
    if total > budget:
        raise EnumerationBudgetError(f"{total} sequences exceed the enumeration budget of {budget}")
    best: List[Hypothesis] = []

    def consider(hyp: Hypothesis) -> None:
        if not best or hyp.rank_key() < best[0].rank_key():
            best[:] = [hyp]

    def visit(prefix: Tuple[int, ...], log_prob: float) -> None:
        if len(prefix) == limit:
            consider(Hypothesis(prefix, log_prob, False))
            return
        dist = model.next_distribution(source, prefix)
        consider(Hypothesis(prefix, log_prob + _log(float(dist[EOS_ID])), True))
        for token in range(1, model.vocab_size):
            visit(prefix + (token,), log_prob + _log(float(dist[token])))

    visit((), 0.0)
    return best[0]


def score_hypothesis(model: ConditionalSequenceModel, source: Hashable, hyp: Hypothesis) -> float:
    """Replay a hypothesis and return its cumulative log-probability."""
    log_prob = 0.0
    for position, token in enumerate(hyp.sequence()):
        dist = model.next_distribution(source, hyp.tokens[:position])
        log_prob += _log(float(dist[token]))
    return log_prob


def decode(
    model: ConditionalSequenceModel, source: Hashable, config: DecodeConfig, rng: Optional[RandomSource] = None
) -> Hypothesis:
    if config.strategy == "greedy":
        return greedy_decode(model, source, config.max_length)
    if config.strategy == "beam":
        return beam_decode(model, source, config.beam_width, config.max_length).best
    return sample_decode(model, source, config.temperature, config.seed if rng is None else rng, config.max_length)


def decode_corpus(
    model: ConditionalSequenceModel, sources: Sequence[Hashable], config: DecodeConfig, threads: int = 1
) -> List[Hypothesis]:
    """
    Decode every source; sentence i samples from stream `sentence_rng(seed, i)`.

    Args:
        model (ConditionalSequenceModel): Shared, read-only model.
        sources (Sequence[Hashable]): Source context keys in corpus order.
        config (DecodeConfig): Decoding settings.
        threads (int): Worker threads; output does not depend on it.

    Returns:
        List[Hypothesis]: One hypothesis per source, in source order.
    """

    def run(index: int) -> Hypothesis:
        return decode(model, sources[index], config, sentence_rng(config.seed, index))

    if threads <= 1:
        return [run(i) for i in range(len(sources))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, range(len(sources))))


def hypotheses_to_corpus(
    model: ConditionalSequenceModel, hypotheses: Sequence[Hypothesis], provenance: str = "<decoded>"
) -> TokenizedCorpus:
    return corpus_from_tokens(
        (model.decode_tokens(h.tokens) for h in hypotheses), vocab=Vocabulary(), provenance=provenance
    )
