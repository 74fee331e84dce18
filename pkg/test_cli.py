import json

import pytest
from typer.testing import CliRunner

import settings as cfg
from cli import app, parse_orders
from errors import ConfigError
from generate_goldens import GOLDEN_RUNS, repo_root
from models import load_model

runner = CliRunner()


def _invoke(*args, env=None):
    return runner.invoke(app, [str(a) for a in args], env=env)


def _panel_args(fixture_path, out, *extra):
    return (
        "panel",
        "--src", fixture_path("toy.src"),
        "--ref", fixture_path("toy.ref"),
        "--hyp", fixture_path("toy.hyp"),
        "--disc-epochs", "50",
        "--out", out,
        *extra,
    )


def test_panel_is_byte_identical_across_runs(tmp_path, fixture_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert _invoke(*_panel_args(fixture_path, first)).exit_code == 0
    assert _invoke(*_panel_args(fixture_path, second)).exit_code == 0
    assert first.read_bytes() == second.read_bytes()
    report = json.loads(first.read_text(encoding="utf-8"))
    assert report["schema_version"] == "1.0"
    assert report["metadata"]["seed"] == 0
    assert report["metadata"]["orders"] == [1, 5]
    assert report["gender"]["confusion"]["female_to_male"] == 2


def test_panel_csv_and_lexicon_override(tmp_path, fixture_path):
    out = tmp_path / "panel.csv"
    result = _invoke(*_panel_args(fixture_path, out, "--format", "csv", "--lexicon", fixture_path("lexicon.tsv")))
    assert result.exit_code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "metric,value"
    metrics = dict(line.split(",", 1) for line in lines[1:])
    assert "baseline_l1_1gram" in metrics
    assert float(metrics["female_recall"]) == 0.5


def test_seed_comes_from_environment(tmp_path, fixture_path):
    out = tmp_path / "panel.json"
    assert _invoke(*_panel_args(fixture_path, out), env={"DIVDIAG_SEED": "7"}).exit_code == 0
    assert json.loads(out.read_text(encoding="utf-8"))["metadata"]["seed"] == 7


@pytest.mark.parametrize("golden", sorted(GOLDEN_RUNS))
def test_output_matches_golden_file(golden, tmp_path, monkeypatch):
    monkeypatch.setattr(cfg, "base_path", str(repo_root()))
    monkeypatch.delenv(cfg.ENV_LEXICON, raising=False)
    out = tmp_path / "golden.json"
    result = _invoke(*GOLDEN_RUNS[golden], "--out", out)
    assert result.exit_code == 0, result.output
    assert out.read_text(encoding="utf-8") == (repo_root() / golden).read_text(encoding="utf-8")


def test_lexicon_comes_from_environment(tmp_path, fixture_path):
    flag, env, plain = (tmp_path / f"{name}.json" for name in ("flag", "env", "plain"))
    assert _invoke(*_panel_args(fixture_path, flag, "--lexicon", fixture_path("lexicon.tsv"))).exit_code == 0
    assert _invoke(*_panel_args(fixture_path, env), env={cfg.ENV_LEXICON: fixture_path("lexicon.tsv")}).exit_code == 0
    assert _invoke(*_panel_args(fixture_path, plain), env={cfg.ENV_LEXICON: None}).exit_code == 0

    def digest(path):
        return json.loads(path.read_text(encoding="utf-8"))["metadata"]["config_digest"]

    assert digest(env) == digest(flag) != digest(plain)


def test_line_count_mismatch_exits_with_input_error(tmp_path, fixture_path):
    result = _invoke(
        "panel",
        "--src", fixture_path("toy.src"),
        "--ref", fixture_path("toy.ref"),
        "--hyp", fixture_path("short.ref"),
        "--out", tmp_path / "never.json",
    )
    assert result.exit_code == 2
    assert "line-count mismatch" in result.output
    assert not (tmp_path / "never.json").exists()


def test_invalid_utf8_reports_line(tmp_path, fixture_path):
    result = _invoke("baseline", "--ref", fixture_path("bad_utf8.txt"))
    assert result.exit_code == 2
    assert "bad_utf8.txt:2" in result.output


def test_invalid_grid_exits_with_config_error(fixture_path):
    result = _invoke(
        "sweep",
        "--src", fixture_path("toy.src"),
        "--ref", fixture_path("toy.ref"),
        "--model", fixture_path("pronoun.tsv"),
        "--grid", "T=1.5",
    )
    assert result.exit_code == 3
    assert '"kind": "configuration"' in result.output


def test_sweep_needs_exactly_one_model_source(fixture_path):
    result = _invoke("sweep", "--src", fixture_path("toy.src"), "--ref", fixture_path("toy.ref"))
    assert result.exit_code == 3


def test_sweep_ignores_thread_count(tmp_path, fixture_path):
    outputs = []
    for threads in (1, 8):
        out = tmp_path / f"sweep{threads}.csv"
        result = _invoke(
            "sweep",
            "--src", fixture_path("toy.src"),
            "--ref", fixture_path("toy.ref"),
            "--model", f"toy={fixture_path('pronoun.tsv')}",
            "--grid", "T=0,0.7;B=2",
            "--disc-epochs", "50",
            "--threads", threads,
            "--format", "csv",
            "--out", out,
        )
        assert result.exit_code == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    rows = outputs[0].decode("utf-8").splitlines()
    assert len(rows) == 5
    assert rows[1].startswith("baseline,,reference,true,")
    assert rows[2].startswith("sample,0.0,toy,false,")


def test_sweep_with_fitted_ngram(tmp_path, fixture_path):
    out = tmp_path / "sweep.json"
    result = _invoke(
        "sweep",
        "--src", fixture_path("toy.src"),
        "--ref", fixture_path("toy.ref"),
        "--fit", fixture_path("toy.train"),
        "--fit-order", "1",
        "--grid", "B=1",
        "--disc-epochs", "10",
        "--out", out,
    )
    assert result.exit_code == 0
    table = json.loads(out.read_text(encoding="utf-8"))
    assert [row["model"] for row in table["rows"]] == ["reference", "ngram"]


def test_train_lm_is_reproducible(tmp_path, fixture_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    digests = []
    for path in paths:
        result = _invoke(
            "train-lm",
            "--corpus", fixture_path("toy.train"),
            "--kind", "trainable",
            "--order", "1",
            "--epochs", "50",
            "--out", path,
        )
        assert result.exit_code == 0
        digests.append(json.loads(result.output)["config_digest"])
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert digests[0] == digests[1]
    assert json.loads(paths[0].read_text(encoding="utf-8"))["config"]["epsilon"] == 0.0


def test_train_lm_rejects_bad_smoothing(tmp_path, fixture_path):
    result = _invoke(
        "train-lm",
        "--corpus", fixture_path("toy.train"),
        "--kind", "trainable",
        "--label-smoothing", "1.0",
        "--out", tmp_path / "m.json",
    )
    assert result.exit_code == 3


def test_decode_greedy(tmp_path, fixture_path):
    out = tmp_path / "decoded.txt"
    result = _invoke(
        "decode",
        "--model", fixture_path("pronoun.tsv"),
        "--src", fixture_path("toy.src"),
        "--strategy", "greedy",
        "--out", out,
    )
    assert result.exit_code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 12
    assert set(lines) == {"he went home ."}


def test_decode_with_context_model_trained_without_sources(tmp_path, fixture_path):
    model_path = tmp_path / "plain.json"
    result = _invoke(
        "train-lm",
        "--corpus", fixture_path("toy.train"),
        "--kind", "trainable",
        "--order", "1",
        "--epochs", "300",
        "--out", model_path,
    )
    assert result.exit_code == 0
    row = load_model(str(model_path)).next_distribution("sie ging nach hause .", ())
    assert row.max() == pytest.approx(0.4, abs=0.03)

    out = tmp_path / "decoded.txt"
    result = _invoke(
        "decode", "--model", model_path, "--src", fixture_path("toy.src"), "--strategy", "greedy", "--out", out,
    )
    assert result.exit_code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 12
    assert all(line.startswith("the ") for line in lines)


def test_decode_beam_with_trained_model(tmp_path, fixture_path):
    model_path = tmp_path / "ngram.json"
    assert _invoke("train-lm", "--corpus", fixture_path("toy.train"), "--out", model_path).exit_code == 0
    out = tmp_path / "decoded.txt"
    result = _invoke(
        "decode", "--model", model_path, "--src", fixture_path("toy.src"),
        "--strategy", "beam", "--beam-width", "3", "--out", out,
    )
    assert result.exit_code == 0
    assert len(out.read_text(encoding="utf-8").splitlines()) == 12


def test_discriminate_command(tmp_path, fixture_path):
    out, saved = tmp_path / "disc.json", tmp_path / "disc.model"
    result = _invoke(
        "discriminate",
        "--generated", fixture_path("toy.hyp"),
        "--real", fixture_path("toy.train"),
        "--epochs", "20",
        "--save-model", saved,
        "--out", out,
    )
    assert result.exit_code == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["n_test"] == 10
    assert report["test_ci_low"] <= report["test_accuracy"] <= report["test_ci_high"]
    assert saved.exists()


def test_baseline_of_identical_sentences(tmp_path):
    corpus = tmp_path / "same.txt"
    corpus.write_text("the cat sat on the mat .\n" * 10, encoding="utf-8")
    out = tmp_path / "baseline.json"
    assert _invoke("baseline", "--ref", corpus, "--train-ref", corpus, "--out", out).exit_code == 0
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["baseline"] == {"l1_1gram": 0.0, "l1_5gram": 0.0, "l1_length": 0.0}
    assert payload["reference_line"]["l1_1gram"] == 0.0
    assert payload["seed"] == 0


def test_schema_command(tmp_path):
    out = tmp_path / "sweep.schema.json"
    assert _invoke("schema", "sweep", "--out", out).exit_code == 0
    assert json.loads(out.read_text(encoding="utf-8"))["$id"] == "divdiag/sweep/1.0"
    assert _invoke("schema", "bogus").exit_code == 3


def test_parse_orders():
    assert parse_orders("1,5") == (1, 5)
    assert parse_orders(" 2 ") == (2,)
    for bad in ("", "0", "a", "1,-2"):
        with pytest.raises(ConfigError):
            parse_orders(bad)
