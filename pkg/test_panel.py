import csv
import io
import json

import pytest

from decoding import DecodeConfig, decode_corpus, hypotheses_to_corpus
from discriminator import TrainingHyperparams
from errors import ConfigError
from models import TabularModel, load_tabular, pronoun_toy_grammar, train_context_model
from panel import (
    REPORT_MODELS,
    SCHEMA_VERSION,
    PanelOptions,
    build_panel,
    flatten_panel,
    parse_grid,
    schema_json,
    sweep,
    sweep_models,
    sweep_to_csv,
    to_json,
)
from textcore import EOS, ParallelCorpus, corpus_from_lines, corpus_from_tokens

FAST = TrainingHyperparams(epochs=50)


@pytest.fixture
def options(lexicon):
    return PanelOptions(lexicon=lexicon, hyperparams=FAST)


def test_identity_panel(toy_parallel, options):
    identity = toy_parallel.with_hypothesis(toy_parallel.reference)
    report = build_panel(identity, options, inputs={"hyp": "toy.ref"})
    metrics = report.metrics
    assert metrics["bleu"] == 100.0
    assert metrics["l1_1gram"] == 0.0
    assert metrics["l1_5gram"] == 0.0
    assert metrics["l1_length"] == 0.0
    assert metrics["punctuation_ratio"] == 1.0
    assert metrics["female_fraction_output"] == metrics["female_fraction_reference"]
    assert metrics["female_recall"] == 1.0 and metrics["male_recall"] == 1.0
    assert metrics["copy_rate"] == report.baselines["copy_rate"]
    assert metrics["sentence_bleu_share_30"] == 1.0
    disc = report.discriminator
    assert disc.test_ci_low <= disc.test_accuracy <= disc.test_ci_high
    assert report.metadata.inputs == {"hyp": "toy.ref"}
    assert set(report.baselines) == {"l1_1gram", "l1_5gram", "l1_length", "copy_rate", "female_fraction"}


def test_panel_is_deterministic(toy_parallel, options, lexicon):
    first = to_json(build_panel(toy_parallel, options))
    assert to_json(build_panel(toy_parallel, options)) == first
    reseeded = build_panel(toy_parallel, PanelOptions(lexicon=lexicon, seed=1, hyperparams=FAST))
    assert reseeded.metadata.config_digest != json.loads(first)["metadata"]["config_digest"]


def test_every_metric_has_a_value_or_a_reason(make_parallel, options):
    parallel = make_parallel(
        ["a b", "c d", "e f", "g h"], ["x y", "y z", "z x", "x x"], ["x y", "y z", "z x", "x y"]
    )
    report = build_panel(parallel, options)
    for name, value in report.metrics.items():
        assert (value is None) == (name in report.absent), name
    assert report.absent["female_fraction_output"] == "undefined"
    assert report.absent["punctuation_ratio"] == "undefined-metric"
    assert report.absent["l1_5gram"] == "undefined-metric"
    assert report.absent["baseline_female_fraction"] == "undefined"
    assert report.metrics["l1_1gram"] is not None


def test_panel_needs_hypothesis(toy_parallel, options):
    with pytest.raises(ConfigError):
        build_panel(ParallelCorpus(toy_parallel.source, toy_parallel.references), options)


def test_reference_lines(toy_parallel, options):
    train = corpus_from_lines(["she went home .", "he read a book ."] * 6)
    report = build_panel(toy_parallel, options, train_reference=train)
    assert set(report.reference_lines) == {"l1_1gram", "l1_5gram", "l1_length"}
    assert report.reference_lines["l1_1gram"] > 0.0
    assert flatten_panel(report)["reference_l1_length"] == report.reference_lines["l1_length"]
    assert flatten_panel(report)["baseline_copy_rate"] == report.baselines["copy_rate"]


def test_parse_grid():
    assert parse_grid("T=0,0.5,1.0;B=1,5,10") == ([0.0, 0.5, 1.0], [1, 5, 10])
    assert parse_grid("B=3") == ([], [3])
    assert parse_grid(" t=0.2 ; ") == ([0.2], [])


@pytest.mark.parametrize("grid", ["T=1.5", "B=0", "", "T=0.5,0.5", "X=1", "T=a", "T0.5", "B=1.5"])
def test_parse_grid_rejects(grid):
    with pytest.raises(ConfigError):
        parse_grid(grid)


def test_sweep_over_pronoun_model(toy_parallel, options, fixture_path):
    model = load_tabular(fixture_path("pronoun.tsv"))
    result = sweep(model, toy_parallel, [0.0, 0.5, 1.0], [1, 5, 10], options)
    rows = result.table.rows
    assert len(rows) == 7
    assert rows[0].baseline and rows[0].strategy == "baseline" and rows[0].parameter is None
    assert not any(r.baseline for r in rows[1:])
    assert [(r.strategy, r.parameter) for r in rows[1:]] == [
        ("sample", 0.0),
        ("sample", 0.5),
        ("sample", 1.0),
        ("beam", 1.0),
        ("beam", 5.0),
        ("beam", 10.0),
    ]
    greedy_row, beam_row = rows[1], rows[4]
    assert greedy_row.metrics == beam_row.metrics
    assert greedy_row.metrics["female_fraction_output"] == 0.0
    assert rows[5].metrics["female_fraction_output"] == 0.0
    assert result.outputs[("model", "sample", 0.0)].detokenize(0) == "he went home ."
    assert rows[1].panel.metadata.inputs["strategy"] == "sample"


def test_sweep_ignores_thread_count(toy_parallel, options, fixture_path):
    model = load_tabular(fixture_path("pronoun.tsv"))
    one = sweep(model, toy_parallel, [0.7], [2], options, threads=1)
    many = sweep(model, toy_parallel, [0.7], [2], options, threads=8)
    assert to_json(one.table) == to_json(many.table)


def test_sweep_tables_serialize(toy_parallel, options, fixture_path):
    model = load_tabular(fixture_path("pronoun.tsv"))
    table = sweep(model, toy_parallel, [0.0], [5], options).table
    records = list(csv.DictReader(io.StringIO(sweep_to_csv(table))))
    assert sweep_to_csv(table).startswith("strategy,parameter,model,baseline,")
    assert len(records) == 3
    assert records[0]["baseline"] == "true" and records[0]["parameter"] == ""
    assert records[0]["female_fraction_output"] == ""
    assert records[1]["baseline"] == "false"
    assert float(records[1]["parameter"]) == 0.0
    assert float(records[1]["female_fraction_output"]) == 0.0
    assert float(records[2]["bleu"]) == table.rows[2].metrics["bleu"]

    payload = json.loads(to_json(table))
    assert payload["schema_version"] == "1.0"
    assert [row["strategy"] for row in payload["rows"]] == ["baseline", "sample", "beam"]
    assert payload["rows"][2]["metrics"] == table.rows[2].metrics


def test_sweep_models_tags_rows(toy_parallel, options):
    models = {"plain": pronoun_toy_grammar(0.4), "flipped": pronoun_toy_grammar(0.6)}
    table = sweep_models(models, toy_parallel, [], [1], options).table
    assert [(r.model, r.strategy) for r in table.rows] == [
        ("reference", "baseline"),
        ("plain", "beam"),
        ("flipped", "beam"),
    ]
    assert table.rows[1].metrics["female_fraction_output"] == 0.0
    assert table.rows[2].metrics["female_fraction_output"] == 1.0


def test_sweep_rejects_bad_input(toy_parallel, options):
    with pytest.raises(ConfigError):
        sweep_models({}, toy_parallel, [0.5], [], options)
    with pytest.raises(ConfigError):
        sweep(pronoun_toy_grammar(0.4), toy_parallel, [2.0], [], options)


def _shape(prop):
    return {key: prop[key] for key in ("type", "$ref", "anyOf", "items") if key in prop}


@pytest.mark.parametrize("kind", sorted(REPORT_MODELS))
def test_shipped_schema_matches_report_model(kind):
    shipped = json.loads(schema_json(kind))
    generated = REPORT_MODELS[kind].model_json_schema()
    assert shipped["$id"] == f"divdiag/{kind}/{SCHEMA_VERSION}"
    assert set(shipped["$defs"]) == set(generated["$defs"])
    pairs = [(shipped, generated)] + [(shipped["$defs"][name], body) for name, body in generated["$defs"].items()]
    for expected, actual in pairs:
        assert expected["title"] == actual["title"]
        assert expected.get("required", []) == actual.get("required", []), actual["title"]
        assert set(expected["properties"]) == set(actual["properties"]), actual["title"]
        for name, prop in actual["properties"].items():
            assert _shape(expected["properties"][name]) == _shape(prop), (actual["title"], name)


def test_schema_json_rejects_unknown_kind():
    with pytest.raises(ConfigError):
        schema_json("table")


def test_label_smoothing_raises_divergence_and_detectability(lexicon):
    # 250 "a", 150 "b" and 100 EOS events, plus one sentence of rare words
    lines = ["a a a b b"] * 50 + ["a a b"] * 50 + [" ".join(f"r{i}" for i in range(1, 19))]
    train = corpus_from_lines(lines)
    models = {
        "plain": train_context_model(train, order=0, epsilon=0.0, learning_rate=2.0, epochs=3000),
        "smoothed": train_context_model(train, order=0, epsilon=0.1, learning_rate=2.0, epochs=3000),
    }
    truth = TabularModel((EOS, "a", "b"), {}, default_row=[0.2, 0.5, 0.3], max_length=40)
    held_out = hypotheses_to_corpus(
        truth, decode_corpus(truth, [""] * 1000, DecodeConfig("sample", temperature=1.0, seed=7))
    )
    source = corpus_from_tokens([[] for _ in range(1000)])
    parallel = ParallelCorpus(source, (held_out,))
    options = PanelOptions(lexicon=lexicon, hyperparams=TrainingHyperparams(learning_rate=2.0, epochs=1000))

    plain, smoothed = sweep_models(models, parallel, [1.0], [], options).table.rows[1:]
    assert (plain.model, smoothed.model) == ("plain", "smoothed")
    assert smoothed.metrics["l1_1gram"] > plain.metrics["l1_1gram"]
    assert smoothed.metrics["discriminator_test_accuracy"] > plain.metrics["discriminator_test_accuracy"]
