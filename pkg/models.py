# models.py
import hashlib
import json
import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from errors import ConfigError, NotTrainedError, TrainingError
from settings import canonical_json, config_digest
from textcore import EOS, TokenizedCorpus

logger = logging.getLogger(__name__)

EOS_ID = 0
BOS_ID = -1  # context padding only, never emitted
WILDCARD = "*"
ROW_TOLERANCE = 1e-9
DEFAULT_MAX_LENGTH = 50

TABULAR_HEADER = "# tabular-model v1"
NGRAM_FORMAT = "ngram-model"
TRAINABLE_FORMAT = "trainable-context-model"
JSON_VERSION = 1

Prefix = Tuple[int, ...]


class ConditionalSequenceModel(ABC):
    """
    Next-token distribution given a source context and an output prefix.

    `symbols[0]` is EOS; every other symbol is an output token. Returned
    rows are nonnegative and sum to 1.
    """

    symbols: Tuple[str, ...]
    max_length: int

    @property
    def vocab_size(self) -> int:
        return len(self.symbols)

    @abstractmethod
    def next_distribution(self, source: Hashable, prefix: Prefix) -> np.ndarray:
        ...

    def encode(self, tokens: Iterable[str]) -> Prefix:
        index = {s: i for i, s in enumerate(self.symbols)}
        try:
            return tuple(index[t] for t in tokens)
        except KeyError as error:
            raise ConfigError(f"token {error.args[0]!r} is not in the model alphabet") from error

    def decode_tokens(self, ids: Iterable[int]) -> Tuple[str, ...]:
        return tuple(self.symbols[i] for i in ids)


def _check_row(row: np.ndarray, where: str) -> np.ndarray:
    row = np.asarray(row, dtype=np.float64)
    if np.any(row < 0) or not np.isfinite(row).all():
        raise ConfigError(f"{where}: probabilities must be finite and nonnegative")
    if abs(row.sum() - 1.0) > ROW_TOLERANCE:
        raise ConfigError(f"{where}: row sums to {row.sum()!r}, expected 1")
    return row


def _context(prefix: Prefix, order: int) -> Prefix:
    if order == 0:
        return ()
    padded = (BOS_ID,) * order + tuple(prefix)
    return padded[-order:]


### TABULAR ###
class TabularModel(ConditionalSequenceModel):
    """
    Explicit probability rows keyed by (source, prefix).

    Lookup tries the exact source, then the wildcard source "*", then the
    default row.
    """

    def __init__(
        self,
        symbols: Sequence[str],
        rows: Mapping[Tuple[Hashable, Prefix], Sequence[float]],
        default_row: Optional[Sequence[float]] = None,
        max_length: int = DEFAULT_MAX_LENGTH,
    ):
        if not symbols or symbols[0] != EOS:
            raise ConfigError(f"symbol 0 must be {EOS!r}")
        self.symbols = tuple(symbols)
        self.max_length = max_length
        size = len(self.symbols)
        self.rows: Dict[Tuple[Hashable, Prefix], np.ndarray] = {}
        for key, row in rows.items():
            if len(row) != size:
                raise ConfigError(f"row {key} has {len(row)} entries, expected {size}")
            self.rows[key] = _check_row(row, f"row {key}")
        if default_row is None:
            default_row = np.full(size, 1.0 / size)
        self.default_row = _check_row(default_row, "default row")

    def next_distribution(self, source: Hashable, prefix: Prefix) -> np.ndarray:
        prefix = tuple(prefix)
        row = self.rows.get((source, prefix))
        if row is None:
            row = self.rows.get((WILDCARD, prefix), self.default_row)
        return row


def pronoun_toy_grammar(p_female: float) -> TabularModel:
    """
    One gendered pronoun, then a shared deterministic continuation.

    Args:
        p_female (float): Probability of "she"; "he" gets the rest. At 0.5
            the tie goes to "she", the lower token id.

    Returns:
        TabularModel: Emits "she|he went home ." then EOS.
    """
    if not 0.0 < p_female < 1.0:
        raise ConfigError(f"p_female must lie in (0, 1), got {p_female}")
    symbols = (EOS, "she", "he", "went", "home", ".")
    size = len(symbols)

    def certain(token: int) -> np.ndarray:
        row = np.zeros(size)
        row[token] = 1.0
        return row

    first = np.zeros(size)
    first[1], first[2] = p_female, 1.0 - p_female
    rows = {(WILDCARD, ()): first}
    for pronoun in (1, 2):
        rows[(WILDCARD, (pronoun,))] = certain(3)
        rows[(WILDCARD, (pronoun, 3))] = certain(4)
        rows[(WILDCARD, (pronoun, 3, 4))] = certain(5)
        rows[(WILDCARD, (pronoun, 3, 4, 5))] = certain(EOS_ID)
    return TabularModel(symbols, rows, default_row=certain(EOS_ID), max_length=6)


def random_tabular_model(rng: np.random.Generator, vocab_size: int, max_length: int) -> TabularModel:
    """Dirichlet(1) rows for every non-EOS prefix shorter than max_length."""
    symbols = (EOS,) + tuple(f"t{i}" for i in range(1, vocab_size))
    rows: Dict[Tuple[Hashable, Prefix], np.ndarray] = {}
    frontier: List[Prefix] = [()]
    for _ in range(max_length):
        next_frontier = []
        for prefix in frontier:
            rows[(WILDCARD, prefix)] = rng.dirichlet(np.ones(vocab_size))
            next_frontier.extend(prefix + (t,) for t in range(1, vocab_size))
        frontier = next_frontier
    return TabularModel(symbols, rows, max_length=max_length)


### N-GRAM ###
class NgramModel(ConditionalSequenceModel):
    """
    Additively smoothed model over the last `order` tokens (BOS-padded).

    P(w | ctx) = (count(ctx, w) + alpha) / (count(ctx) + alpha * V); the
    source context is ignored.
    """

    def __init__(
        self,
        symbols: Sequence[str],
        order: int,
        alpha: float,
        counts: Mapping[Prefix, np.ndarray],
        max_length: int = DEFAULT_MAX_LENGTH,
        config: Optional[Dict[str, Any]] = None,
    ):
        if order < 1:
            raise ConfigError(f"n-gram order must be >= 1, got {order}")
        if alpha <= 0:
            raise ConfigError(f"smoothing constant must be positive, got {alpha}")
        self.symbols = tuple(symbols)
        self.order = order
        self.alpha = alpha
        self.counts = {tuple(k): np.asarray(v, dtype=np.float64) for k, v in counts.items()}
        self.max_length = max_length
        self.config = config or {}

    def next_distribution(self, source: Hashable, prefix: Prefix) -> np.ndarray:
        row = self.counts.get(_context(prefix, self.order))
        size = self.vocab_size
        if row is None:
            return np.full(size, 1.0 / size)
        return (row + self.alpha) / (row.sum() + self.alpha * size)


def corpus_fingerprint(corpus: TokenizedCorpus) -> str:
    digest = hashlib.sha256()
    for tokens in corpus.surfaces():
        digest.update(" ".join(tokens).encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


def corpus_symbols(corpus: TokenizedCorpus) -> Tuple[str, ...]:
    """EOS followed by corpus forms in order of first appearance."""
    seen: Dict[str, None] = {}
    for tokens in corpus.surfaces():
        for t in tokens:
            seen.setdefault(t, None)
    return (EOS,) + tuple(seen)


def _encoded_sentences(corpus: TokenizedCorpus, symbols: Sequence[str]) -> List[Prefix]:
    index = {s: i for i, s in enumerate(symbols)}
    return [tuple(index[t] for t in tokens) for tokens in corpus.surfaces()]


def _default_max_length(corpus: TokenizedCorpus) -> int:
    longest = max((len(s) for s in corpus.sentences), default=0)
    return max(2 * longest + 2, 4)


def fit_ngram(corpus: TokenizedCorpus, order: int, alpha: float, max_length: Optional[int] = None) -> NgramModel:
    """
    Count BOS-padded contexts and EOS transitions.

    Args:
        corpus (TokenizedCorpus): Training sentences.
        order (int): Context length k >= 1.
        alpha (float): Additive smoothing constant > 0.
        max_length (int, optional): Decoding cap; defaults to twice the
            longest training sentence plus 2.

    Returns:
        NgramModel: The fitted model.
    """
    if len(corpus) == 0:
        raise TrainingError("cannot fit an n-gram model on an empty corpus")
    if order < 1:
        raise ConfigError(f"n-gram order must be >= 1, got {order}")
    if alpha <= 0:
        raise ConfigError(f"smoothing constant must be positive, got {alpha}")
    symbols = corpus_symbols(corpus)
    counts: Dict[Prefix, np.ndarray] = {}
    for sentence in _encoded_sentences(corpus, symbols):
        for position, token in enumerate(sentence + (EOS_ID,)):
            key = _context(sentence[:position], order)
            row = counts.get(key)
            if row is None:
                row = counts[key] = np.zeros(len(symbols))
            row[token] += 1
    config = {
        "kind": "ngram",
        "order": order,
        "alpha": alpha,
        "corpus": corpus_fingerprint(corpus),
    }
    logger.info("fit %d-gram model: %d symbols, %d contexts", order, len(symbols), len(counts))
    return NgramModel(
        symbols, order, alpha, counts, max_length=max_length or _default_max_length(corpus), config=config
    )


### LABEL-SMOOTHED TRAINING ###
def smoothed_targets(target: int, vocab_size: int, epsilon: float) -> np.ndarray:
    q = np.full(vocab_size, epsilon / vocab_size)
    q[target] += 1.0 - epsilon
    return q


def smoothed_ce_loss_and_grad(logits: np.ndarray, target: int, epsilon: float) -> Tuple[float, np.ndarray]:
    """
    Cross-entropy against a label-smoothed target.

    Args:
        logits (np.ndarray): Unnormalized scores over the vocabulary.
        target (int): Gold token id.
        epsilon (float): Smoothing mass in [0, 1), spread uniformly over the
            full vocabulary including EOS.

    Returns:
        Tuple[float, np.ndarray]: Loss and its gradient softmax(logits) - q.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ConfigError(f"label smoothing must lie in [0, 1), got {epsilon}")
    logits = np.asarray(logits, dtype=np.float64)
    q = smoothed_targets(target, logits.size, epsilon)
    log_p = log_softmax(logits)
    return float(-(q @ log_p)), softmax(logits) - q


def fit_context_logits(
    event_counts: Mapping[Hashable, np.ndarray],
    vocab_size: int,
    epsilon: float,
    learning_rate: float,
    epochs: int,
) -> Tuple[Dict[Hashable, np.ndarray], List[float]]:
    """
    Gradient descent on the mean smoothed cross-entropy of all events.

    Args:
        event_counts (Mapping[Hashable, np.ndarray]): Per-context target
            counts.
        vocab_size (int): Output alphabet size.
        epsilon (float): Label smoothing in [0, 1).
        learning_rate (float): Step size.
        epochs (int): Full-batch steps from zero logits.

    Returns:
        Tuple[Dict[Hashable, np.ndarray], List[float]]: Logits per context and
        the loss before each step plus the final loss.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ConfigError(f"label smoothing must lie in [0, 1), got {epsilon}")
    keys = list(event_counts)
    counts = np.array([event_counts[k] for k in keys], dtype=np.float64).reshape(len(keys), vocab_size)
    per_context = counts.sum(axis=1, keepdims=True)
    total = float(per_context.sum())
    if total == 0:
        raise TrainingError("no training events")
    targets = (1.0 - epsilon) * counts + epsilon * per_context / vocab_size
    logits = np.zeros_like(counts)
    history: List[float] = []
    for epoch in range(epochs + 1):
        log_p = log_softmax(logits, axis=1)
        history.append(float(-(targets * log_p).sum() / total))
        if epoch == epochs:
            break
        logits -= learning_rate * (per_context * np.exp(log_p) - targets) / total
    return {k: logits[i].copy() for i, k in enumerate(keys)}, history


class TrainableContextModel(ConditionalSequenceModel):
    """
    Softmax over learned logits per (source, last-k-tokens) context.

    Lookup tries the exact source, then the pooled row under the wildcard
    source "*", then falls back to uniform.
    """

    def __init__(
        self,
        symbols: Sequence[str],
        order: int,
        epsilon: float,
        logits: Mapping[Tuple[Hashable, Prefix], np.ndarray],
        trained: bool = True,
        max_length: int = DEFAULT_MAX_LENGTH,
        config: Optional[Dict[str, Any]] = None,
        loss_history: Optional[List[float]] = None,
    ):
        self.symbols = tuple(symbols)
        self.order = order
        self.epsilon = epsilon
        self.logits = {(s, tuple(c)): np.asarray(v, dtype=np.float64) for (s, c), v in logits.items()}
        self.trained = trained
        self.max_length = max_length
        self.config = config or {}
        self.loss_history = loss_history or []

    def next_distribution(self, source: Hashable, prefix: Prefix) -> np.ndarray:
        if not self.trained:
            raise NotTrainedError("context model has not been trained")
        context = _context(prefix, self.order)
        row = self.logits.get((source, context))
        if row is None:
            row = self.logits.get((WILDCARD, context))
        if row is None:
            return np.full(self.vocab_size, 1.0 / self.vocab_size)
        return softmax(row)


def _count_events(
    keyed_sentences: Iterable[Tuple[Hashable, Prefix]], order: int, size: int
) -> Dict[Tuple[Hashable, Prefix], np.ndarray]:
    event_counts: Dict[Tuple[Hashable, Prefix], np.ndarray] = {}
    for source, sentence in keyed_sentences:
        for position, token in enumerate(sentence + (EOS_ID,)):
            key = (source, _context(sentence[:position], order))
            row = event_counts.get(key)
            if row is None:
                row = event_counts[key] = np.zeros(size)
            row[token] += 1
    return event_counts


def train_context_model(
    corpus: TokenizedCorpus,
    source_contexts: Optional[Sequence[Hashable]] = None,
    order: int = 1,
    epsilon: float = 0.0,
    learning_rate: float = 1.0,
    epochs: int = 1000,
    seed: int = 0,
    max_length: Optional[int] = None,
) -> TrainableContextModel:
    """
    Train a logit table with label-smoothed cross-entropy.

    Rows pooled over all sources are always fit under the wildcard source
    and serve any source the model has not seen. Per-source rows are fit
    separately when source contexts are given.

    Args:
        corpus (TokenizedCorpus): Target sentences.
        source_contexts (Sequence[Hashable], optional): One source key per
            sentence; only pooled rows are trained when omitted.
        order (int): Number of previous tokens in the context (k >= 0).
        epsilon (float): Label smoothing in [0, 1).
        learning_rate (float): Step size.
        epochs (int): Full-batch steps.
        seed (int): Recorded for provenance; training starts from zero
            logits and is deterministic.
        max_length (int, optional): Decoding cap.

    Returns:
        TrainableContextModel: The trained model.
    """
    if len(corpus) == 0:
        raise TrainingError("cannot train on an empty corpus")
    if order < 0:
        raise ConfigError(f"context length must be >= 0, got {order}")
    if learning_rate <= 0 or epochs < 0:
        raise ConfigError("learning rate must be positive and epochs non-negative")
    if source_contexts is not None and len(source_contexts) != len(corpus):
        raise TrainingError(f"{len(source_contexts)} source contexts for {len(corpus)} sentences")
    symbols = corpus_symbols(corpus)
    size = len(symbols)
    sentences = _encoded_sentences(corpus, symbols)
    pooled = _count_events(((WILDCARD, s) for s in sentences), order, size)
    logits, history = fit_context_logits(pooled, size, epsilon, learning_rate, epochs)
    if source_contexts is not None:
        per_source = _count_events(zip(source_contexts, sentences), order, size)
        exact, history = fit_context_logits(per_source, size, epsilon, learning_rate, epochs)
        logits.update(exact)
    logger.info("trained context model: %d contexts, loss %.6f -> %.6f", len(logits), history[0], history[-1])
    config = {
        "kind": "trainable",
        "order": order,
        "epsilon": epsilon,
        "learning_rate": learning_rate,
        "epochs": epochs,
        "seed": seed,
        "corpus": corpus_fingerprint(corpus),
    }
    return TrainableContextModel(
        symbols,
        order,
        epsilon,
        logits,
        trained=True,
        max_length=max_length or _default_max_length(corpus),
        config=config,
        loss_history=history,
    )


def entropy(row: np.ndarray) -> float:
    positive = row[row > 0]
    return float(-(positive * np.log(positive)).sum())


### PERSISTENCE ###
def _prefix_text(model: ConditionalSequenceModel, prefix: Prefix) -> str:
    return " ".join(model.symbols[i] for i in prefix)


def save_tabular(model: TabularModel, path: str) -> None:
    """Write `context<TAB>prefix<TAB>token<TAB>prob` rows; zero entries are omitted."""
    lines = [TABULAR_HEADER, "# symbols: " + " ".join(model.symbols), f"# max-length: {model.max_length}"]
    entries = [((str(s), p), row) for (s, p), row in model.rows.items()]
    for (source, prefix), row in sorted(entries, key=lambda e: e[0]):
        for token, prob in enumerate(row):
            if prob > 0:
                lines.append(f"{source}\t{_prefix_text(model, prefix)}\t{model.symbols[token]}\t{float(prob)!r}")
    for token, prob in enumerate(model.default_row):
        if prob > 0:
            lines.append(f"{WILDCARD}\t{WILDCARD}\t{model.symbols[token]}\t{float(prob)!r}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_tabular(path: str) -> TabularModel:
    """
    Read a tabular model file and enforce the row-sum invariant.

    Without a `# symbols:` header the alphabet is EOS followed by tokens in
    order of first appearance. The row with prefix "*" is the default row.
    """
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != TABULAR_HEADER:
        raise ConfigError(f"{path}: missing '{TABULAR_HEADER}' header")
    symbols: List[str] = [EOS]
    max_length = DEFAULT_MAX_LENGTH
    raw: List[Tuple[str, str, str, float]] = []
    for number, line in enumerate(lines[1:], start=2):
        if line.startswith("# symbols:"):
            declared = line[len("# symbols:"):].split()
            if not declared or declared[0] != EOS:
                raise ConfigError(f"{path}:{number}: symbol list must start with {EOS}")
            symbols = declared
            continue
        if line.startswith("# max-length:"):
            max_length = int(line.split(":", 1)[1])
            continue
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ConfigError(f"{path}:{number}: expected 4 tab-separated fields")
        try:
            raw.append((parts[0], parts[1], parts[2], float(parts[3])))
        except ValueError as error:
            raise ConfigError(f"{path}:{number}: bad probability {parts[3]!r}") from error
        for token in parts[1].split() + [parts[2]]:
            if token != WILDCARD and token not in symbols:
                symbols.append(token)
    index = {s: i for i, s in enumerate(symbols)}
    rows: Dict[Tuple[Hashable, Prefix], np.ndarray] = {}
    default_row: Optional[np.ndarray] = None
    for source, prefix, token, prob in raw:
        if prefix == WILDCARD:
            if default_row is None:
                default_row = np.zeros(len(symbols))
            default_row[index[token]] += prob
            continue
        key = (source, tuple(index[t] for t in prefix.split()))
        if key not in rows:
            rows[key] = np.zeros(len(symbols))
        rows[key][index[token]] += prob
    return TabularModel(symbols, rows, default_row=default_row, max_length=max_length)


def _model_payload(model: ConditionalSequenceModel) -> Dict[str, Any]:
    if isinstance(model, NgramModel):
        entries = [
            {"context": list(ctx), "counts": [int(c) for c in row]}
            for ctx, row in sorted(model.counts.items())
        ]
        return {
            "format": NGRAM_FORMAT,
            "order": model.order,
            "alpha": model.alpha,
            "entries": entries,
        }
    if isinstance(model, TrainableContextModel):
        entries = [
            {"source": str(src), "context": list(ctx), "logits": [float(v) for v in row]}
            for (src, ctx), row in sorted(model.logits.items(), key=lambda e: (str(e[0][0]), e[0][1]))
        ]
        return {
            "format": TRAINABLE_FORMAT,
            "order": model.order,
            "epsilon": model.epsilon,
            "trained": model.trained,
            "entries": entries,
        }
    raise ConfigError(f"cannot serialize {type(model).__name__} as JSON")


def save_model(model: ConditionalSequenceModel, path: str) -> str:
    """
    Persist a model; tabular models as text, learned models as JSON.

    Returns:
        str: The config digest written with the model ("" for tabular).
    """
    if isinstance(model, TabularModel):
        save_tabular(model, path)
        return ""
    payload = _model_payload(model)
    config = getattr(model, "config", {})
    digest = config_digest(config)
    payload.update(
        {
            "version": JSON_VERSION,
            "symbols": list(model.symbols),
            "max_length": model.max_length,
            "config": config,
            "config_digest": digest,
        }
    )
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(payload, indent=1, sort_keys=True, ensure_ascii=False) + "\n")
    return digest


def load_model(path: str) -> ConditionalSequenceModel:
    """Load any model file written by save_model (or a hand-written tabular file)."""
    with open(path, encoding="utf-8") as f:
        head = f.readline()
    if head.startswith(TABULAR_HEADER):
        return load_tabular(path)
    with open(path, encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as error:
            raise ConfigError(f"{path}: not a model file ({error})") from error
    if payload.get("version") != JSON_VERSION:
        raise ConfigError(f"{path}: unsupported model version {payload.get('version')!r}")
    config = payload.get("config", {})
    if payload.get("config_digest") != config_digest(config):
        raise ConfigError(f"{path}: config digest mismatch")
    kind = payload.get("format")
    if kind == NGRAM_FORMAT:
        counts = {tuple(e["context"]): np.array(e["counts"], dtype=np.float64) for e in payload["entries"]}
        return NgramModel(
            payload["symbols"], payload["order"], payload["alpha"], counts, payload["max_length"], config
        )
    if kind == TRAINABLE_FORMAT:
        logits = {(e["source"], tuple(e["context"])): np.array(e["logits"]) for e in payload["entries"]}
        return TrainableContextModel(
            payload["symbols"],
            payload["order"],
            payload["epsilon"],
            logits,
            trained=payload["trained"],
            max_length=payload["max_length"],
            config=config,
        )
    raise ConfigError(f"{path}: unknown model format {kind!r}")


def model_digest(model: ConditionalSequenceModel) -> str:
    """Stable digest of a model's parameters, used in run metadata."""
    if isinstance(model, TabularModel):
        payload: Dict[str, Any] = {
            "symbols": list(model.symbols),
            "rows": sorted([str(s), list(p), [float(v) for v in r]] for (s, p), r in model.rows.items()),
            "default": [float(v) for v in model.default_row],
        }
    else:
        payload = _model_payload(model)
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()
