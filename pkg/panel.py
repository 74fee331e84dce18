# panel.py
import csv
import io
import logging
import os
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict

import bleu as bl
import divergence as dv
import gender as gn
from decoding import DecodeConfig, decode_corpus, hypotheses_to_corpus
from discriminator import DiscriminationReport, TrainingHyperparams, discriminate
from errors import ConfigError, DiagnosticsError
from models import ConditionalSequenceModel, model_digest
from settings import config_digest
from textcore import PUNCTUATION, ParallelCorpus, SubsetLexicon, TokenizedCorpus, partition_indices

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
DEFAULT_ORDERS: Tuple[int, ...] = (1, 5)
DEFAULT_TEMPERATURES: Tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(11))
DEFAULT_BEAM_WIDTHS: Tuple[int, ...] = (1, 2, 5, 10)
UNDEFINED = "undefined"
SCHEMA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "schemas")


class RunMetadata(BaseModel):
    model_config = ConfigDict(frozen=True)

    inputs: Dict[str, Any]
    seed: int
    orders: List[int]
    side: str
    config_digest: str


class DiagnosticPanelReport(BaseModel):
    """Every scalar metric is either in `metrics` with a value or None plus a reason in `absent`."""

    model_config = ConfigDict(frozen=True)

    schema_version: str = SCHEMA_VERSION
    metadata: RunMetadata
    metrics: Dict[str, Optional[float]]
    baselines: Dict[str, Optional[float]]
    reference_lines: Dict[str, Optional[float]]
    absent: Dict[str, str]
    bleu: Optional[bl.BleuScore] = None
    sentence_bleu: Optional[bl.SentenceBleuHistogram] = None
    word_f1_by_frequency: Optional[bl.BucketedReport] = None
    bleu_by_length: Optional[bl.BucketedReport] = None
    gender: Optional[gn.GenderReport] = None
    discriminator: Optional[DiscriminationReport] = None


class SweepRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: str
    strategy: str
    parameter: Optional[float]
    baseline: bool
    metrics: Dict[str, Optional[float]]
    panel: Optional[DiagnosticPanelReport] = None


class SweepTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    schema_version: str = SCHEMA_VERSION
    metadata: RunMetadata
    rows: List[SweepRow]


REPORT_MODELS = {"panel": DiagnosticPanelReport, "sweep": SweepTable}


@dataclass(frozen=True)
class PanelOptions:
    lexicon: SubsetLexicon
    side: str = "english"
    seed: int = 0
    orders: Tuple[int, ...] = DEFAULT_ORDERS
    hyperparams: TrainingHyperparams = TrainingHyperparams()

    def digest_config(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "orders": list(self.orders),
            "side": self.side,
            "lexicon": {k: sorted(v) for k, v in sorted(self.lexicon.classes.items())},
            "hyperparams": asdict(self.hyperparams),
        }


class _Collector:
    """Records each metric or the reason it is absent."""

    def __init__(self):
        self.values: Dict[str, Optional[float]] = {}
        self.absent: Dict[str, str] = {}

    def measure(self, name: str, compute: Callable[[], Optional[float]]) -> Optional[float]:
        try:
            value = compute()
        except DiagnosticsError as error:
            logger.warning("metric %s absent: %s", name, error)
            self.values[name] = None
            self.absent[name] = error.kind
            return None
        if value is None:
            self.absent.setdefault(name, UNDEFINED)
        self.values[name] = None if value is None else float(value)
        return value

    def attempt(self, name: str, compute: Callable[[], Any]) -> Any:
        try:
            return compute()
        except DiagnosticsError as error:
            logger.warning("report %s absent: %s", name, error)
            self.absent[name] = error.kind
            return None


def baseline_metrics(
    parallel: ParallelCorpus, options: PanelOptions, collector: Optional[_Collector] = None
) -> Dict[str, Optional[float]]:
    """Partition baselines of the reference, its female fraction and the reference copy rate."""
    collector = collector or _Collector()
    ref = parallel.reference
    values: Dict[str, Optional[float]] = {}
    for n in options.orders:
        values[f"l1_{n}gram"] = collector.measure(
            f"baseline_l1_{n}gram", lambda n=n: dv.partition_baseline(ref, n, options.seed)
        )
    values["l1_length"] = collector.measure(
        "baseline_l1_length", lambda: dv.partition_baseline(ref, dv.LENGTH, options.seed)
    )
    values["copy_rate"] = collector.measure(
        "baseline_copy_rate", lambda: dv.copy_rate(parallel.source, ref, options.lexicon)
    )
    values["female_fraction"] = collector.measure(
        "baseline_female_fraction", lambda: dv.female_fraction(ref, options.lexicon, options.side)
    )
    return values


def _reference_lines(
    train_reference: Optional[TokenizedCorpus], ref: TokenizedCorpus, options: PanelOptions, collector: _Collector
) -> Dict[str, Optional[float]]:
    if train_reference is None:
        return {}
    lines: Dict[str, Optional[float]] = {}
    for n in options.orders:
        lines[f"l1_{n}gram"] = collector.measure(
            f"reference_l1_{n}gram", lambda n=n: dv.ngram_l1(train_reference, ref, n)
        )
    lines["l1_length"] = collector.measure("reference_l1_length", lambda: dv.length_l1(train_reference, ref))
    return lines


def build_panel(
    parallel: ParallelCorpus,
    options: PanelOptions,
    inputs: Optional[Mapping[str, Any]] = None,
    train_reference: Optional[TokenizedCorpus] = None,
) -> DiagnosticPanelReport:
    """
    Compute the full diagnostic panel for one system output.

    Args:
        parallel (ParallelCorpus): Source, references and hypothesis.
        options (PanelOptions): Lexicon, side, seed, n-gram orders and
            discriminator hyperparameters.
        inputs (Mapping[str, Any], optional): Provenance recorded in the
            metadata and digest.
        train_reference (TokenizedCorpus, optional): Training-side
            references for the reference lines.

    Returns:
        DiagnosticPanelReport: Metrics, baselines and detailed reports.
    """
    hyp = parallel.hypothesis
    if hyp is None:
        raise ConfigError("panel needs a hypothesis corpus")
    ref = parallel.reference
    lexicon = options.lexicon
    collector = _Collector()
    logger.info("building panel over %d sentences", len(parallel))

    for n in options.orders:
        collector.measure(f"l1_{n}gram", lambda n=n: dv.ngram_l1(hyp, ref, n))
    collector.measure("l1_length", lambda: dv.length_l1(hyp, ref))
    for n in options.orders:
        collector.measure(f"distinct_{n}", lambda n=n: dv.distinct_ngram_ratio(hyp, n))
    collector.measure("punctuation_ratio", lambda: dv.punctuation_ratio(hyp, ref, lexicon))
    collector.measure("punctuation_frequency", lambda: dv.subset_frequency(hyp, lexicon, PUNCTUATION))
    collector.measure("female_fraction_output", lambda: dv.female_fraction(hyp, lexicon, options.side))
    collector.measure("female_fraction_reference", lambda: dv.female_fraction(ref, lexicon, options.side))
    collector.measure("copy_rate", lambda: dv.copy_rate(parallel.source, hyp, lexicon))

    bleu_score = collector.attempt("bleu", lambda: bl.corpus_bleu(hyp, parallel.references))
    collector.measure("bleu", lambda: None if bleu_score is None else bleu_score.score)
    histogram = collector.attempt("sentence_bleu", lambda: bl.sentence_bleu_histogram(parallel))
    collector.measure("sentence_bleu_variance", lambda: None if histogram is None else histogram.variance)
    collector.measure("sentence_bleu_share_30", lambda: None if histogram is None else histogram.share_at_least_30)
    word_f1 = collector.attempt("word_f1_by_frequency", lambda: bl.word_f1_by_frequency(hyp, ref))
    by_length = collector.attempt("bleu_by_length", lambda: bl.bleu_by_length(parallel))

    report = collector.attempt("gender", lambda: gn.gender_report(parallel, lexicon, options.side))
    for name in ("female_recall", "male_recall", "female_to_male_rate", "male_to_female_rate"):
        collector.measure(name, lambda name=name: None if report is None else getattr(report, name))

    def run_discriminator() -> DiscriminationReport:
        generated_half, real_half = partition_indices(len(parallel), 0.5, options.seed)
        return discriminate(hyp.subset(generated_half), ref.subset(real_half), options.seed, options.hyperparams)[1]

    discrimination = collector.attempt("discriminator", run_discriminator)
    collector.measure(
        "discriminator_train_accuracy", lambda: None if discrimination is None else discrimination.train_accuracy
    )
    collector.measure(
        "discriminator_test_accuracy", lambda: None if discrimination is None else discrimination.test_accuracy
    )

    baseline_collector = _Collector()
    baselines = baseline_metrics(parallel, options, baseline_collector)
    reference_lines = _reference_lines(train_reference, ref, options, baseline_collector)

    config = dict(options.digest_config(), inputs=dict(inputs or {}))
    return DiagnosticPanelReport(
        metadata=RunMetadata(
            inputs=dict(inputs or {}),
            seed=options.seed,
            orders=list(options.orders),
            side=options.side,
            config_digest=config_digest(config),
        ),
        metrics=collector.values,
        baselines=baselines,
        reference_lines=reference_lines,
        absent={**collector.absent, **baseline_collector.absent},
        bleu=bleu_score,
        sentence_bleu=histogram,
        word_f1_by_frequency=word_f1,
        bleu_by_length=by_length,
        gender=report,
        discriminator=discrimination,
    )


### SWEEP ###
def parse_grid(spec: str) -> Tuple[List[float], List[int]]:
    """
    Parse "T=0,0.5,1.0;B=1,5,10" into temperatures and beam widths.

    Either part may be omitted. Temperatures must lie in [0, 1] and widths
    must be >= 1.
    """
    temperatures: List[float] = []
    widths: List[int] = []
    for part in filter(None, (p.strip() for p in spec.split(";"))):
        name, sep, values = part.partition("=")
        if not sep:
            raise ConfigError(f"grid part {part!r} must look like 'T=...' or 'B=...'")
        try:
            items = [v.strip() for v in values.split(",") if v.strip()]
            if name.strip().upper() == "T":
                temperatures.extend(float(v) for v in items)
            elif name.strip().upper() == "B":
                widths.extend(int(v) for v in items)
            else:
                raise ConfigError(f"unknown grid axis {name!r}")
        except ValueError as error:
            raise ConfigError(f"bad grid values in {part!r}") from error
    validate_grid(temperatures, widths)
    return temperatures, widths


def validate_grid(temperatures: Sequence[float], widths: Sequence[int]) -> None:
    if not temperatures and not widths:
        raise ConfigError("empty decoding grid")
    for t in temperatures:
        if not 0.0 <= t <= 1.0:
            raise ConfigError(f"temperature {t} outside [0, 1]")
    for b in widths:
        if b < 1:
            raise ConfigError(f"beam width {b} must be >= 1")
    if len(set(temperatures)) != len(temperatures) or len(set(widths)) != len(widths):
        raise ConfigError("grid settings must be unique")


def grid_configs(temperatures: Sequence[float], widths: Sequence[int], seed: int, max_length: Optional[int] = None) -> List[DecodeConfig]:
    configs = [DecodeConfig("sample", temperature=t, max_length=max_length, seed=seed) for t in temperatures]
    configs += [DecodeConfig("beam", beam_width=b, max_length=max_length, seed=seed) for b in widths]
    return configs


def source_keys(parallel: ParallelCorpus) -> List[str]:
    return [" ".join(tokens) for tokens in parallel.source.surfaces()]


@dataclass(frozen=True)
class SweepResult:
    table: SweepTable
    outputs: Dict[Tuple[str, str, float], TokenizedCorpus]


def flatten_panel(report: DiagnosticPanelReport) -> Dict[str, Optional[float]]:
    flat = dict(report.metrics)
    flat.update({f"baseline_{k}": v for k, v in report.baselines.items()})
    flat.update({f"reference_{k}": v for k, v in report.reference_lines.items()})
    return flat


def sweep_models(
    models: Mapping[str, ConditionalSequenceModel],
    parallel: ParallelCorpus,
    temperatures: Sequence[float],
    beam_widths: Sequence[int],
    options: PanelOptions,
    threads: int = 1,
    max_length: Optional[int] = None,
    inputs: Optional[Mapping[str, Any]] = None,
    train_reference: Optional[TokenizedCorpus] = None,
) -> SweepResult:
    """
    Decode the sources under every grid setting for every model and score each output.

    Args:
        models (Mapping[str, ConditionalSequenceModel]): Named models, e.g.
            with and without label smoothing.
        parallel (ParallelCorpus): Sources and references.
        temperatures (Sequence[float]): Sampling temperatures in [0, 1].
        beam_widths (Sequence[int]): Beam widths >= 1.
        options (PanelOptions): Panel settings; its seed also seeds decoding.
        threads (int): Decoding threads; never changes results.
        max_length (int, optional): Step cap override.
        inputs (Mapping[str, Any], optional): Provenance for metadata.
        train_reference (TokenizedCorpus, optional): Reference-line corpus.

    Returns:
        SweepResult: The table (baseline row first) and decoded corpora keyed
        by (model, strategy, parameter).
    """
    validate_grid(temperatures, beam_widths)
    if not models:
        raise ConfigError("no models to sweep")
    sources = source_keys(parallel)
    baseline_collector = _Collector()
    baseline = baseline_metrics(parallel, options, baseline_collector)
    baseline.update(
        {f"reference_{k}": v for k, v in _reference_lines(train_reference, parallel.reference, options, baseline_collector).items()}
    )
    rows = [SweepRow(model="reference", strategy="baseline", parameter=None, baseline=True, metrics=baseline)]
    outputs: Dict[Tuple[str, str, float], TokenizedCorpus] = {}
    for name, model in models.items():
        for config in grid_configs(temperatures, beam_widths, options.seed, max_length):
            logger.info("sweep %s: %s %s", name, config.strategy, config.parameter)
            hypotheses = decode_corpus(model, sources, config, threads)
            output = hypotheses_to_corpus(model, hypotheses, f"{name}:{config.strategy}={config.parameter}")
            outputs[(name, config.strategy, config.parameter)] = output
            setting_inputs = dict(inputs or {}, model=name, strategy=config.strategy, parameter=config.parameter)
            report = build_panel(parallel.with_hypothesis(output), options, setting_inputs, train_reference)
            rows.append(
                SweepRow(
                    model=name,
                    strategy=config.strategy,
                    parameter=config.parameter,
                    baseline=False,
                    metrics=report.metrics,
                    panel=report,
                )
            )
    config = dict(
        options.digest_config(),
        inputs=dict(inputs or {}),
        models={name: model_digest(m) for name, m in models.items()},
        temperatures=list(temperatures),
        beam_widths=list(beam_widths),
        max_length=max_length,
    )
    metadata = RunMetadata(
        inputs=dict(inputs or {}),
        seed=options.seed,
        orders=list(options.orders),
        side=options.side,
        config_digest=config_digest(config),
    )
    return SweepResult(table=SweepTable(metadata=metadata, rows=rows), outputs=outputs)


def sweep(
    model: ConditionalSequenceModel,
    parallel: ParallelCorpus,
    temperatures: Sequence[float],
    beam_widths: Sequence[int],
    options: PanelOptions,
    threads: int = 1,
    max_length: Optional[int] = None,
    inputs: Optional[Mapping[str, Any]] = None,
    train_reference: Optional[TokenizedCorpus] = None,
) -> SweepResult:
    """Single-model sweep; see sweep_models."""
    return sweep_models(
        {"model": model}, parallel, temperatures, beam_widths, options, threads, max_length, inputs, train_reference
    )


### EMISSION ###
def sweep_columns(table: SweepTable) -> List[str]:
    columns: List[str] = []
    for row in table.rows:
        for name in row.metrics:
            if name not in columns:
                columns.append(name)
    return columns


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def sweep_to_csv(table: SweepTable) -> str:
    """CSV with columns strategy, parameter, model, baseline, then one per metric."""
    metric_columns = sweep_columns(table)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["strategy", "parameter", "model", "baseline", *metric_columns])
    for row in table.rows:
        writer.writerow(
            [row.strategy, format_cell(row.parameter), row.model, format_cell(row.baseline)]
            + [format_cell(row.metrics.get(name)) for name in metric_columns]
        )
    return buffer.getvalue()


def to_json(report: BaseModel) -> str:
    return report.model_dump_json(indent=2) + "\n"


def schema_path(kind: str) -> str:
    if kind not in REPORT_MODELS:
        raise ConfigError(f"unknown schema {kind!r}; expected one of {sorted(REPORT_MODELS)}")
    return os.path.join(SCHEMA_DIR, f"{kind}.schema.json")


def schema_json(kind: str) -> str:
    """The versioned JSON schema shipped for a report kind ("panel" or "sweep")."""
    with open(schema_path(kind), encoding="utf-8") as f:
        return f.read()
