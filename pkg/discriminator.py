# discriminator.py
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import sparse
from scipy.special import expit
from scipy.stats import binomtest
from sklearn.feature_extraction.text import CountVectorizer, TfidfTransformer
from sklearn.preprocessing import normalize

from errors import ConfigError, DatasetError, DegenerateTrainingError, NotTrainedError
from textcore import TokenizedCorpus

logger = logging.getLogger(__name__)

GENERATED = 1
REAL = 0
LABEL_NAMES = {GENERATED: "generated", REAL: "real"}

FORMAT_HEADER = "# linear-discriminator v1"
DEFAULT_MIN_DF = 2

Document = Tuple[str, ...]


@dataclass(frozen=True)
class TrainingHyperparams:
    learning_rate: float = 0.1
    l2: float = 1e-4
    epochs: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.l2 < 0:
            raise ConfigError(f"L2 strength must be non-negative, got {self.l2}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")


def _analyzer(document: Document) -> Document:
    return document


class TfIdfVectorizer:
    """
    Unigram TF-IDF features over pre-tokenized sentences.

    idf(t) = ln((1 + D) / (1 + df(t))) + 1; rows are L2-normalized. Features
    seen in fewer than `min_df` training documents are dropped.
    """

    def __init__(self, min_df: int = DEFAULT_MIN_DF):
        self.min_df = min_df
        self.features: Tuple[str, ...] = ()
        self.idf = np.zeros(0)
        self._counter: Optional[CountVectorizer] = None

    def fit(self, documents: Sequence[Document]) -> "TfIdfVectorizer":
        counter = CountVectorizer(analyzer=_analyzer, min_df=self.min_df, lowercase=False)
        try:
            counts = counter.fit_transform(documents)
        except ValueError:
            # every term fell under the df floor
            logger.warning("no TF-IDF features survive min_df=%d on %d documents", self.min_df, len(documents))
            return self._set(())
        idf = TfidfTransformer(smooth_idf=True, sublinear_tf=False).fit(counts).idf_
        return self._set(tuple(counter.get_feature_names_out()), idf)

    def _set(self, features: Sequence[str], idf: Optional[np.ndarray] = None) -> "TfIdfVectorizer":
        self.features = tuple(features)
        self.idf = np.asarray(idf if idf is not None else np.zeros(0), dtype=np.float64)
        self._counter = None
        if self.features:
            self._counter = CountVectorizer(
                analyzer=_analyzer, lowercase=False, vocabulary={f: i for i, f in enumerate(self.features)}
            )
        return self

    @classmethod
    def from_parts(cls, features: Sequence[str], idf: Sequence[float], min_df: int = DEFAULT_MIN_DF) -> "TfIdfVectorizer":
        return cls(min_df)._set(features, np.asarray(idf, dtype=np.float64))

    def transform(self, documents: Sequence[Document]) -> np.ndarray:
        if self._counter is None:
            return np.zeros((len(documents), 0))
        counts = self._counter.transform(documents) @ sparse.diags(self.idf)
        return normalize(sparse.csr_matrix(counts), norm="l2").toarray()


@dataclass(frozen=True)
class DiscriminationDataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    vectorizer: Optional[TfIdfVectorizer] = None
    train_documents: Tuple[Document, ...] = ()
    test_documents: Tuple[Document, ...] = ()


class DiscriminationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    train_accuracy: float
    test_accuracy: float
    test_ci_low: float
    test_ci_high: float
    n_train: int
    n_test: int
    precision: Dict[str, Optional[float]]
    recall: Dict[str, Optional[float]]


def build_dataset(
    generated: TokenizedCorpus, real: TokenizedCorpus, seed: int, min_df: int = DEFAULT_MIN_DF
) -> DiscriminationDataset:
    """
    Label, balance, shuffle and split sentences for discrimination.

    Both classes are truncated to the smaller class size after a seeded
    shuffle; each class then goes ceil/floor into train/test. The vectorizer
    is fit on the train split only.

    Args:
        generated (TokenizedCorpus): System output, labeled "generated".
        real (TokenizedCorpus): Human references, labeled "real".
        seed (int): Shuffle seed.
        min_df (int): Document-frequency floor for features.

    Returns:
        DiscriminationDataset: Vectorized train and test splits.
    """
    if len(generated) == 0 or len(real) == 0:
        raise DatasetError("both generated and real corpora must be nonempty")
    size = min(len(generated), len(real))
    if size < 2:
        raise DatasetError(f"need at least 2 sentences per class, got {size}")
    rng = np.random.default_rng(seed)
    train_rows: List[Tuple[Document, int]] = []
    test_rows: List[Tuple[Document, int]] = []
    for corpus, label in ((generated, GENERATED), (real, REAL)):
        surfaces = corpus.surfaces()
        chosen = rng.permutation(len(corpus))[:size]
        cut = (size + 1) // 2
        train_rows.extend((surfaces[i], label) for i in chosen[:cut])
        test_rows.extend((surfaces[i], label) for i in chosen[cut:])
    train_rows = [train_rows[i] for i in rng.permutation(len(train_rows))]
    test_rows = [test_rows[i] for i in rng.permutation(len(test_rows))]
    train_docs = tuple(d for d, _ in train_rows)
    test_docs = tuple(d for d, _ in test_rows)
    vectorizer = TfIdfVectorizer(min_df).fit(train_docs)
    logger.info("discrimination dataset: %d train, %d test, %d features", len(train_rows), len(test_rows), len(vectorizer.features))
    return DiscriminationDataset(
        x_train=vectorizer.transform(train_docs),
        y_train=np.array([y for _, y in train_rows], dtype=np.float64),
        x_test=vectorizer.transform(test_docs),
        y_test=np.array([y for _, y in test_rows], dtype=np.float64),
        vectorizer=vectorizer,
        train_documents=train_docs,
        test_documents=test_docs,
    )


@dataclass
class LinearDiscriminator:
    """Logistic regression; "generated" iff w.x + b > 0, ties go to "real"."""

    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bias: float = 0.0
    trained: bool = False
    hyperparams: TrainingHyperparams = field(default_factory=TrainingHyperparams)
    vectorizer: Optional[TfIdfVectorizer] = None
    loss_history: List[float] = field(default_factory=list)

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        if not self.trained:
            raise NotTrainedError("discriminator has not been trained")
        return x @ self.weights + self.bias

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return (self.decision_function(x) > 0).astype(np.float64)


def loss_and_gradient(
    weights: np.ndarray, bias: float, x: np.ndarray, y: np.ndarray, l2: float
) -> Tuple[float, np.ndarray, float]:
    """
    L2-regularized mean binary cross-entropy and its gradient.

    Returns:
        Tuple[float, np.ndarray, float]: (loss, gradient w.r.t. weights,
        gradient w.r.t. bias). The bias is not regularized.
    """
    scores = x @ weights + bias
    loss = float(np.mean(np.logaddexp(0.0, scores) - y * scores) + 0.5 * l2 * weights @ weights)
    residual = expit(scores) - y
    grad_w = x.T @ residual / len(y) + l2 * weights
    grad_b = float(np.mean(residual))
    return loss, grad_w, grad_b


def train(dataset: DiscriminationDataset, hyperparams: TrainingHyperparams = TrainingHyperparams()) -> LinearDiscriminator:
    """
    Full-batch gradient descent from zero weights.

    Args:
        dataset (DiscriminationDataset): Must hold both labels in train.
        hyperparams (TrainingHyperparams): Learning rate, L2, epochs, seed.

    Returns:
        LinearDiscriminator: Trained model with its per-epoch loss history.
    """
    y = dataset.y_train
    if y.size == 0 or np.all(y == y[0]):
        raise DegenerateTrainingError("training split must contain both labels")
    x = dataset.x_train
    weights = np.zeros(x.shape[1])
    bias = 0.0
    history: List[float] = []
    for epoch in range(hyperparams.epochs):
        loss, grad_w, grad_b = loss_and_gradient(weights, bias, x, y, hyperparams.l2)
        history.append(loss)
        weights = weights - hyperparams.learning_rate * grad_w
        bias = bias - hyperparams.learning_rate * grad_b
        if epoch % 100 == 0:
            logger.debug("epoch %d loss %.6f", epoch, loss)
    history.append(loss_and_gradient(weights, bias, x, y, hyperparams.l2)[0])
    return LinearDiscriminator(
        weights=weights,
        bias=bias,
        trained=True,
        hyperparams=hyperparams,
        vectorizer=dataset.vectorizer,
        loss_history=history,
    )


def _safe_div(num: float, den: float) -> Optional[float]:
    return num / den if den else None


def evaluate(model: LinearDiscriminator, dataset: DiscriminationDataset) -> DiscriminationReport:
    """
    Train/test accuracy, exact 95% binomial interval, per-class precision/recall.

    Args:
        model (LinearDiscriminator): Trained model.
        dataset (DiscriminationDataset): Dataset the model is scored on.

    Returns:
        DiscriminationReport: The evaluation.
    """
    train_pred = model.predict(dataset.x_train)
    test_pred = model.predict(dataset.x_test)
    y = dataset.y_test
    n_test = int(y.size)
    if n_test == 0:
        raise DatasetError("empty test split")
    correct = int(np.sum(test_pred == y))
    interval = binomtest(correct, n_test).proportion_ci(confidence_level=0.95, method="exact")
    precision, recall = {}, {}
    for label, name in LABEL_NAMES.items():
        true_pos = float(np.sum((test_pred == label) & (y == label)))
        precision[name] = _safe_div(true_pos, float(np.sum(test_pred == label)))
        recall[name] = _safe_div(true_pos, float(np.sum(y == label)))
    return DiscriminationReport(
        train_accuracy=float(np.mean(train_pred == dataset.y_train)) if dataset.y_train.size else 0.0,
        test_accuracy=correct / n_test,
        test_ci_low=float(interval.low),
        test_ci_high=float(interval.high),
        n_train=int(dataset.y_train.size),
        n_test=n_test,
        precision=precision,
        recall=recall,
    )


def discriminate(
    generated: TokenizedCorpus,
    real: TokenizedCorpus,
    seed: int,
    hyperparams: TrainingHyperparams = TrainingHyperparams(),
) -> Tuple[LinearDiscriminator, DiscriminationReport]:
    """Build the dataset, train, and evaluate in one call."""
    dataset = build_dataset(generated, real, seed)
    model = train(dataset, hyperparams)
    return model, evaluate(model, dataset)


### PERSISTENCE ###
def save_discriminator(model: LinearDiscriminator, path: str) -> None:
    """
    Write a model as plain text.

    Layout: header line, `hyper<TAB>name<TAB>value` lines, a
    `bias<TAB>value` line, then one `feature<TAB>form<TAB>idf<TAB>weight`
    line per feature. Floats are written with repr() so reloads are exact.
    """
    if not model.trained:
        raise NotTrainedError("refusing to save an untrained discriminator")
    vectorizer = model.vectorizer or TfIdfVectorizer()
    lines = [FORMAT_HEADER]
    hp = model.hyperparams
    for name, value in (("learning_rate", hp.learning_rate), ("l2", hp.l2), ("epochs", hp.epochs), ("seed", hp.seed), ("min_df", vectorizer.min_df)):
        lines.append(f"hyper\t{name}\t{value!r}")
    lines.append(f"bias\t{float(model.bias)!r}")
    for feature, idf, weight in zip(vectorizer.features, vectorizer.idf, model.weights):
        lines.append(f"feature\t{feature}\t{float(idf)!r}\t{float(weight)!r}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_discriminator(path: str) -> LinearDiscriminator:
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != FORMAT_HEADER:
        raise ConfigError(f"{path}: not a '{FORMAT_HEADER}' file")
    hyper: Dict[str, str] = {}
    bias = 0.0
    features, idf, weights = [], [], []
    for line in lines[1:]:
        parts = line.split("\t")
        if parts[0] == "hyper" and len(parts) == 3:
            hyper[parts[1]] = parts[2]
        elif parts[0] == "bias" and len(parts) == 2:
            bias = float(parts[1])
        elif parts[0] == "feature" and len(parts) == 4:
            features.append(parts[1])
            idf.append(float(parts[2]))
            weights.append(float(parts[3]))
        elif line:
            raise ConfigError(f"{path}: malformed line {line!r}")
    hyperparams = TrainingHyperparams(
        learning_rate=float(hyper.get("learning_rate", 0.1)),
        l2=float(hyper.get("l2", 1e-4)),
        epochs=int(hyper.get("epochs", 500)),
        seed=int(hyper.get("seed", 0)),
    )
    return LinearDiscriminator(
        weights=np.asarray(weights, dtype=np.float64),
        bias=bias,
        trained=True,
        hyperparams=hyperparams,
        vectorizer=TfIdfVectorizer.from_parts(features, idf, int(hyper.get("min_df", DEFAULT_MIN_DF))),
    )
