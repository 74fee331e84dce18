# cli.py
import functools
import json
import logging
from typing import Annotated, Any, Callable, Dict, List, Optional, Tuple

import typer

import discriminator as dc
import divergence as dv
import models as lm
import panel as pn
import settings as cfg
import textcore as tc
from decoding import DecodeConfig, decode_corpus
from errors import ConfigError, DiagnosticsError

logger = logging.getLogger(__name__)

# Create the command-line app
app = typer.Typer(name="divdiag", help="Diversity diagnostics for machine translation output.", add_completion=False)

FORMATS = ("json", "csv")

Seed = Annotated[int, typer.Option("--seed", envvar=cfg.ENV_SEED, help="Seed for every random choice.")]
Threads = Annotated[int, typer.Option("--threads", envvar=cfg.ENV_THREADS, min=1, help="Worker threads.")]
Out = Annotated[Optional[str], typer.Option("--out", help="Write the primary output here instead of stdout.")]
Format = Annotated[str, typer.Option("--format", help="Output format: json or csv.")]
Lexicon = Annotated[
    Optional[str], typer.Option("--lexicon", envvar=cfg.ENV_LEXICON, help="Token-class override file.")
]
LogLevel = Annotated[str, typer.Option("--log-level", envvar=cfg.ENV_LOG_LEVEL, help="Logging level (stderr).")]
Mode = Annotated[str, typer.Option("--tokenize", help="Tokenization mode: whitespace or simple.")]
Orders = Annotated[str, typer.Option("--orders", help="Comma-separated n-gram orders.")]


def handles_errors(command: Callable) -> Callable:
    """Turn a DiagnosticsError into one JSON line on stderr and its exit code."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except DiagnosticsError as error:
            logger.debug("command failed", exc_info=True)
            typer.echo(json.dumps(error.to_dict(), ensure_ascii=False), err=True)
            raise typer.Exit(code=error.exit_code)

    return wrapper


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(cfg.resolve_path(out), "w", encoding="utf-8") as f:
            f.write(text)
        logger.info("wrote %s", out)
    else:
        typer.echo(text, nl=False)


def _check_format(fmt: str) -> str:
    if fmt not in FORMATS:
        raise ConfigError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    return fmt


def parse_orders(spec: str) -> Tuple[int, ...]:
    try:
        orders = tuple(int(v) for v in spec.split(",") if v.strip())
    except ValueError as error:
        raise ConfigError(f"bad n-gram orders {spec!r}") from error
    if not orders or any(n < 1 for n in orders):
        raise ConfigError(f"n-gram orders must be positive integers, got {spec!r}")
    return orders


def _json(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _resolve(path: Optional[str]) -> Optional[str]:
    return cfg.resolve_path(path) if path else None


def _options(lexicon: Optional[str], side: str, seed: int, orders: str, hyperparams: dc.TrainingHyperparams) -> pn.PanelOptions:
    return pn.PanelOptions(
        lexicon=tc.load_lexicon(_resolve(lexicon)),
        side=side,
        seed=seed,
        orders=parse_orders(orders),
        hyperparams=hyperparams,
    )


### PANEL ###
@app.command("panel")
@handles_errors
def cmd_panel(
    src: Annotated[str, typer.Option("--src", help="Source-language file.")],
    ref: Annotated[List[str], typer.Option("--ref", help="Reference file; repeat for several references.")],
    hyp: Annotated[str, typer.Option("--hyp", help="System output file.")],
    train_ref: Annotated[Optional[str], typer.Option("--train-ref", help="Training references for reference lines.")] = None,
    side: Annotated[str, typer.Option("--side", help="Target language side of the lexicon.")] = "english",
    orders: Orders = "1,5",
    disc_learning_rate: Annotated[float, typer.Option("--disc-learning-rate")] = 0.1,
    disc_l2: Annotated[float, typer.Option("--disc-l2")] = 1e-4,
    disc_epochs: Annotated[int, typer.Option("--disc-epochs")] = 500,
    tokenize: Mode = "whitespace",
    lexicon: Lexicon = None,
    seed: Seed = cfg.DEFAULT_SEED,
    out: Out = None,
    fmt: Format = "json",
    log_level: LogLevel = cfg.DEFAULT_LOG_LEVEL,
) -> None:
    """
    Compute the diagnostic panel of one system output against its references.

    Args:
        src (str): Source-language file.
        ref (List[str]): Reference files, first one primary.
        hyp (str): System output file.
        train_ref (str): Optional training references for the reference lines.

    Returns:
        None: Writes a DiagnosticPanelReport as JSON (or a metric,value CSV).
    """
    cfg.configure_logging(log_level)
    _check_format(fmt)
    hyperparams = dc.TrainingHyperparams(disc_learning_rate, disc_l2, disc_epochs, seed)
    options = _options(lexicon, side, seed, orders, hyperparams)
    parallel = tc.load_parallel(cfg.resolve_path(src), [cfg.resolve_path(p) for p in ref], cfg.resolve_path(hyp), tokenize)
    train = tc.read_corpus(cfg.resolve_path(train_ref), mode=tokenize) if train_ref else None
    inputs = {"src": src, "ref": list(ref), "hyp": hyp, "train_ref": train_ref, "tokenize": tokenize}
    report = pn.build_panel(parallel, options, inputs, train)
    if fmt == "csv":
        rows = ["metric,value"] + [f"{k},{pn.format_cell(v)}" for k, v in pn.flatten_panel(report).items()]
        _emit("\n".join(rows) + "\n", out)
    else:
        _emit(pn.to_json(report), out)


### SWEEP ###
def _parse_named(spec: str) -> Tuple[str, str]:
    name, sep, path = spec.partition("=")
    if not sep:
        return "model", spec
    if not name or not path:
        raise ConfigError(f"expected NAME=PATH, got {spec!r}")
    return name, path


@app.command("sweep")
@handles_errors
def cmd_sweep(
    src: Annotated[str, typer.Option("--src", help="Source-language file.")],
    ref: Annotated[List[str], typer.Option("--ref", help="Reference file; repeat for several references.")],
    model: Annotated[
        Optional[List[str]], typer.Option("--model", help="Model file, optionally NAME=PATH; repeat to compare models.")
    ] = None,
    fit: Annotated[Optional[str], typer.Option("--fit", help="Fit an n-gram model on this corpus instead.")] = None,
    fit_order: Annotated[int, typer.Option("--fit-order")] = 2,
    fit_alpha: Annotated[float, typer.Option("--fit-alpha")] = 0.1,
    grid: Annotated[Optional[str], typer.Option("--grid", help='Grid such as "T=0,0.5,1.0;B=1,5,10".')] = None,
    max_length: Annotated[Optional[int], typer.Option("--max-length")] = None,
    train_ref: Annotated[Optional[str], typer.Option("--train-ref")] = None,
    side: Annotated[str, typer.Option("--side")] = "english",
    orders: Orders = "1,5",
    disc_epochs: Annotated[int, typer.Option("--disc-epochs")] = 500,
    tokenize: Mode = "whitespace",
    lexicon: Lexicon = None,
    seed: Seed = cfg.DEFAULT_SEED,
    threads: Threads = cfg.DEFAULT_THREADS,
    out: Out = None,
    fmt: Format = "json",
    log_level: LogLevel = cfg.DEFAULT_LOG_LEVEL,
) -> None:
    """
    Decode the sources under a grid of temperatures and beam widths and score every output.

    Returns:
        None: Writes the SweepTable as JSON, or as CSV for plotting.
    """
    cfg.configure_logging(log_level)
    _check_format(fmt)
    if bool(model) == bool(fit):
        raise ConfigError("give either --model or --fit")
    options = _options(lexicon, side, seed, orders, dc.TrainingHyperparams(epochs=disc_epochs, seed=seed))
    parallel = tc.load_parallel(cfg.resolve_path(src), [cfg.resolve_path(p) for p in ref], mode=tokenize)
    models: Dict[str, lm.ConditionalSequenceModel] = {}
    model_inputs: Dict[str, str] = {}
    if fit:
        corpus = tc.read_corpus(cfg.resolve_path(fit), mode=tokenize)
        models["ngram"] = lm.fit_ngram(corpus, fit_order, fit_alpha)
        model_inputs["ngram"] = f"fit:{fit}:order={fit_order}:alpha={fit_alpha!r}"
    for spec in model or []:
        name, path = _parse_named(spec)
        if name in models:
            raise ConfigError(f"duplicate model name {name!r}")
        models[name] = lm.load_model(cfg.resolve_path(path))
        model_inputs[name] = path
    if grid:
        temperatures, widths = pn.parse_grid(grid)
    else:
        temperatures, widths = list(pn.DEFAULT_TEMPERATURES), list(pn.DEFAULT_BEAM_WIDTHS)
    train = tc.read_corpus(cfg.resolve_path(train_ref), mode=tokenize) if train_ref else None
    inputs = {"src": src, "ref": list(ref), "models": model_inputs, "grid": grid, "tokenize": tokenize}
    result = pn.sweep_models(models, parallel, temperatures, widths, options, threads, max_length, inputs, train)
    _emit(pn.sweep_to_csv(result.table) if fmt == "csv" else pn.to_json(result.table), out)


### MODELS ###
@app.command("train-lm")
@handles_errors
def cmd_train_lm(
    corpus: Annotated[str, typer.Option("--corpus", help="Target-side training sentences.")],
    out: Annotated[str, typer.Option("--out", help="Model file to write.")],
    kind: Annotated[str, typer.Option("--kind", help="ngram or trainable.")] = "ngram",
    order: Annotated[int, typer.Option("--order", help="Context length (n-gram order or k).")] = 2,
    alpha: Annotated[float, typer.Option("--alpha", help="Additive smoothing for n-gram models.")] = 0.1,
    label_smoothing: Annotated[float, typer.Option("--label-smoothing", help="Label smoothing epsilon.")] = 0.0,
    learning_rate: Annotated[float, typer.Option("--learning-rate")] = 1.0,
    epochs: Annotated[int, typer.Option("--epochs")] = 1000,
    source: Annotated[Optional[str], typer.Option("--source", help="Aligned source file for source contexts.")] = None,
    max_length: Annotated[Optional[int], typer.Option("--max-length")] = None,
    tokenize: Mode = "whitespace",
    seed: Seed = cfg.DEFAULT_SEED,
    log_level: LogLevel = cfg.DEFAULT_LOG_LEVEL,
) -> None:
    """
    Train an n-gram or label-smoothed context model and save it with its config digest.

    Args:
        corpus (str): Training sentences.
        out (str): Destination model file.
        kind (str): "ngram" or "trainable".
        label_smoothing (float): Epsilon for trainable models (0.1 is the usual setting).

    Returns:
        None: Prints {"model": path, "config_digest": digest}.
    """
    cfg.configure_logging(log_level)
    sentences = tc.read_corpus(cfg.resolve_path(corpus), mode=tokenize)
    if kind == "ngram":
        model = lm.fit_ngram(sentences, order, alpha, max_length)
    elif kind == "trainable":
        if not 0.0 <= label_smoothing < 1.0:
            raise ConfigError(f"label smoothing must lie in [0, 1), got {label_smoothing}")
        contexts = None
        if source:
            src = tc.read_corpus(cfg.resolve_path(source), mode=tokenize)
            tc.check_aligned(src, sentences)
            contexts = [src.detokenize(i) for i in range(len(src))]
        model = lm.train_context_model(
            sentences, contexts, order, label_smoothing, learning_rate, epochs, seed, max_length
        )
    else:
        raise ConfigError(f"unknown model kind {kind!r}; expected ngram or trainable")
    digest = lm.save_model(model, cfg.resolve_path(out))
    typer.echo(_json({"model": out, "config_digest": digest}), nl=False)


@app.command("decode")
@handles_errors
def cmd_decode(
    model: Annotated[str, typer.Option("--model", help="Model file.")],
    src: Annotated[str, typer.Option("--src", help="Source-language file.")],
    strategy: Annotated[str, typer.Option("--strategy", help="sample, greedy or beam.")] = "sample",
    temperature: Annotated[float, typer.Option("--temperature")] = 1.0,
    beam_width: Annotated[int, typer.Option("--beam-width")] = 1,
    max_length: Annotated[Optional[int], typer.Option("--max-length")] = None,
    tokenize: Mode = "whitespace",
    seed: Seed = cfg.DEFAULT_SEED,
    threads: Threads = cfg.DEFAULT_THREADS,
    out: Out = None,
    log_level: LogLevel = cfg.DEFAULT_LOG_LEVEL,
) -> None:
    """
    Decode every source line with one strategy.

    Returns:
        None: Writes one detokenized output per source line.
    """
    cfg.configure_logging(log_level)
    loaded = lm.load_model(cfg.resolve_path(model))
    sources = tc.read_corpus(cfg.resolve_path(src), mode=tokenize)
    config = DecodeConfig(strategy, temperature, beam_width, max_length, seed)
    hypotheses = decode_corpus(loaded, [sources.detokenize(i) for i in range(len(sources))], config, threads)
    lines = [" ".join(loaded.decode_tokens(h.tokens)) for h in hypotheses]
    _emit("".join(line + "\n" for line in lines), out)


### DISCRIMINATOR ###
@app.command("discriminate")
@handles_errors
def cmd_discriminate(
    generated: Annotated[str, typer.Option("--generated", help="Generated sentences (label 1).")],
    real: Annotated[str, typer.Option("--real", help="Real sentences (label 0).")],
    learning_rate: Annotated[float, typer.Option("--learning-rate")] = 0.1,
    l2: Annotated[float, typer.Option("--l2")] = 1e-4,
    epochs: Annotated[int, typer.Option("--epochs")] = 500,
    save_model: Annotated[Optional[str], typer.Option("--save-model", help="Write the trained model here.")] = None,
    tokenize: Mode = "whitespace",
    seed: Seed = cfg.DEFAULT_SEED,
    out: Out = None,
    log_level: LogLevel = cfg.DEFAULT_LOG_LEVEL,
) -> None:
    """
    Train a TF-IDF logistic-regression discriminator between two corpora.

    Returns:
        None: Writes the DiscriminationReport as JSON.
    """
    cfg.configure_logging(log_level)
    hyperparams = dc.TrainingHyperparams(learning_rate, l2, epochs, seed)
    trained, report = dc.discriminate(
        tc.read_corpus(cfg.resolve_path(generated), mode=tokenize),
        tc.read_corpus(cfg.resolve_path(real), mode=tokenize),
        seed,
        hyperparams,
    )
    if save_model:
        dc.save_discriminator(trained, cfg.resolve_path(save_model))
    _emit(pn.to_json(report), out)


### BASELINE ###
@app.command("baseline")
@handles_errors
def cmd_baseline(
    ref: Annotated[str, typer.Option("--ref", help="Reference corpus to partition.")],
    orders: Orders = "1,5",
    train_ref: Annotated[Optional[str], typer.Option("--train-ref", help="Also report train-vs-ref lines.")] = None,
    tokenize: Mode = "whitespace",
    seed: Seed = cfg.DEFAULT_SEED,
    out: Out = None,
    log_level: LogLevel = cfg.DEFAULT_LOG_LEVEL,
) -> None:
    """
    L1 distances between two random halves of a reference corpus.

    Returns:
        None: Writes {"l1_<n>gram": ..., "l1_length": ...} as JSON.
    """
    cfg.configure_logging(log_level)
    ns = parse_orders(orders)
    corpus = tc.read_corpus(cfg.resolve_path(ref), mode=tokenize)
    values: Dict[str, Any] = {f"l1_{n}gram": dv.partition_baseline(corpus, n, seed) for n in ns}
    values["l1_length"] = dv.partition_baseline(corpus, dv.LENGTH, seed)
    payload: Dict[str, Any] = {"seed": seed, "baseline": values}
    if train_ref:
        train = tc.read_corpus(cfg.resolve_path(train_ref), mode=tokenize)
        payload["reference_line"] = dv.reference_line(train, corpus, ns)
    _emit(_json(payload), out)


@app.command("schema")
@handles_errors
def cmd_schema(
    kind: Annotated[str, typer.Argument(help="panel or sweep.")] = "panel",
    out: Out = None,
) -> None:
    """Print the versioned JSON schema of a report."""
    _emit(pn.schema_json(kind), out)
