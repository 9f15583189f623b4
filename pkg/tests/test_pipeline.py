import json
from pathlib import Path

import pytest

from obfugraph import pipeline as pl
from obfugraph.cli import main
from obfugraph.corpus import CorpusOptions

TINY = {
    "scorer": {"threshold": 1.5},
    "encoder": {"d_type": 3, "d_value": 3, "d_pos": 2, "value_buckets": 256},
    "partition": {"m": 4},
    "model": {"layers": 1, "d": 8, "heads": 2, "dropout": 0.0, "mlp": [8, 1]},
    "train": {"max_epochs": 2, "patience": 2, "batch_size": 8},
}


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def run_cli(capsys, *argv) -> tuple[int, dict]:
    code = main([*map(str, argv), "--json"])
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1])


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    """Small gen-corpus -> score -> deob -> build -> train run shared by several tests."""
    root = tmp_path_factory.mktemp("chain")
    cfg_path = root / "cfg.json"
    cfg_path.write_text(json.dumps({**TINY, "out_dir": str(root / "run")}))
    assert main(["gen-corpus", "12", "12", "--out", str(root / "corpus"), "--seed", "3"]) == 0
    manifest = root / "corpus" / "manifest.jsonl"
    before = tree_bytes(root / "corpus")
    for argv in (["score", manifest], ["deob", manifest, "--mode", "rules"],
                 ["build", root / "run" / "deob" / "manifest.jsonl"], ["train"]):
        assert main([*map(str, argv), "--config", str(cfg_path)]) == 0
    return {"root": root, "cfg": cfg_path, "manifest": manifest, "corpus_before": before}


def test_config_rejects_unknown_keys():
    with pytest.raises(pl.ConfigError, match="unknown key"):
        pl.config_from_dict({"bogus": 1})
    with pytest.raises(pl.ConfigError, match="config.train: unknown key"):
        pl.config_from_dict({"train": {"lr": 1e-3, "learning_rate": 1}})
    with pytest.raises(pl.ConfigError, match="config.deob.llm"):
        pl.config_from_dict({"deob": {"llm": {"nope": True}}})
    with pytest.raises(pl.ConfigError, match="config.model"):
        pl.config_from_dict({"model": {"m": 3}})


def test_config_roundtrip_and_seed_override():
    cfg = pl.config_from_dict(TINY)
    assert pl.config_from_dict(json.loads(json.dumps(cfg.to_json()))) == cfg
    seeded = cfg.with_seed(9)
    assert seeded.partition.seed == 9 and seeded.train.seed == 9
    assert cfg.partition.seed == 0
    assert cfg.model_config().m == 4


def test_gen_corpus_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        pl.run_gen_corpus(10, 10, 7, tmp_path / name, CorpusOptions())
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert a == b and len(a) == 22


def test_chain_outputs(chain):
    run = chain["root"] / "run"
    assert (run / "scores.csv").read_text().count("\n") == 25
    report = json.loads((run / "deob" / "report.json").read_text())
    assert report["report"]["gated"] == 24
    assert "service_calls" not in report["report"]
    index = (run / "graphs" / "index.jsonl").read_text().splitlines()
    assert len(index) == 24
    hist = (run / "model" / "history.csv").read_text().splitlines()
    assert len(hist) == 3
    split = json.loads((run / "model" / "split.json").read_text())
    assert sorted(split["train"] + split["val"] + split["test"]) == list(range(24))


def test_inputs_are_not_mutated(chain):
    assert tree_bytes(chain["root"] / "corpus") == chain["corpus_before"]


def test_rerun_reuses_cache_and_is_identical(chain, capsys):
    run = chain["root"] / "run"
    deob_before = tree_bytes(run / "deob")
    graphs_before = tree_bytes(run / "graphs")
    code, summary = run_cli(capsys, "deob", chain["manifest"], "--mode", "rules",
                            "--config", chain["cfg"])
    assert code == 0 and summary["cache_hits"] == 24
    code, summary = run_cli(capsys, "build", run / "deob" / "manifest.jsonl",
                            "--config", chain["cfg"])
    assert code == 0 and summary["cached"] == 24 and summary["built"] == 0
    assert tree_bytes(run / "deob") == deob_before
    assert tree_bytes(run / "graphs") == graphs_before


def test_eval_and_predict(chain, capsys):
    run = chain["root"] / "run"
    ckpt = run / "model" / "checkpoint.json"
    code, summary = run_cli(capsys, "eval", "--checkpoint", ckpt, "--split", "all")
    assert code == 0 and summary["n"] == 24
    assert 0.0 <= summary["auc"] <= 1.0
    assert (run / "model" / "roc.csv").exists()
    sample = sorted((chain["root"] / "corpus").rglob("*.js"))[0]
    code, pred = run_cli(capsys, "predict", "--checkpoint", ckpt, sample,
                         "--config", chain["cfg"])
    assert code == 0
    assert set(pred) >= {"path", "score", "label", "s_obf", "engine_used"}
    assert pred["label"] == int(pred["score"] >= 0.5)


def test_cli_failures_exit_one(tmp_path, capsys):
    code, summary = run_cli(capsys, "score", tmp_path / "missing.jsonl")
    assert code == 1 and summary["exit"] == 1 and summary["error"]
    bad = tmp_path / "cfg.json"
    bad.write_text(json.dumps({"unknown": 1}))
    code, summary = run_cli(capsys, "score", tmp_path / "m.jsonl", "--config", bad)
    assert code == 1 and "unknown key" in summary["error"]
    code, summary = run_cli(capsys, "eval", "--checkpoint", tmp_path / "none.json")
    assert code == 1


def test_global_flags_before_or_after_subcommand(tmp_path, capsys):
    assert main(["--seed", "5", "gen-corpus", "3", "3", "--out", str(tmp_path / "a")]) == 0
    assert main(["gen-corpus", "3", "3", "--out", str(tmp_path / "b"), "--seed", "5"]) == 0
    capsys.readouterr()
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
