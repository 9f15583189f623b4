"""Stage functions behind the command line, plus the pipeline config.

Every stage reads files and writes new files atomically; nothing is
modified in place.  Each returns a JSON-serializable summary.
"""
from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .corpus import CorpusOptions, generate_corpus
from .deob import DeobConfig, LlmClientConfig, batch_deobfuscate
from .deob.batch import Deobfuscator, atomic_write
from .frontend import LexError, ParseError, SourceFile, parse
from .graph import CodeGraph, build_graph, dumps_record, from_graph_record
from .manifest import ManifestRow, manifest_lines, read_manifest
from .model import ClusterGT, ClusterGTConfig, GraphInput, prepare
from .partition import Partition, partition
from .scoring import ScoreRow, ScorerWeights, gate, obfuscation_score, write_report
from .train import (TrainConfig, evaluate, history_csv, metrics_csv, roc_csv, split, train)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionConfig:
    m: int = 8
    seed: int = 0
    epsilon: float = 0.1


@dataclass(frozen=True)
class EncoderConfig:
    d_type: int = 48
    d_value: int = 48
    d_pos: int = 32
    value_buckets: int = 2 ** 14


MODEL_KEYS = ("layers", "d", "heads", "dropout", "kernel", "mlp")


@dataclass
class PipelineConfig:
    scorer: ScorerWeights = field(default_factory=ScorerWeights)
    deob: DeobConfig = field(default_factory=DeobConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    cache_dir: str | None = None
    out_dir: str = "runs"

    def model_config(self) -> ClusterGTConfig:
        return ClusterGTConfig(m=self.partition.m, **dataclasses.asdict(self.encoder),
                               **self.model)

    def with_seed(self, seed: int | None) -> "PipelineConfig":
        if seed is None:
            return self
        return dataclasses.replace(
            self, partition=dataclasses.replace(self.partition, seed=seed),
            train=dataclasses.replace(self.train, seed=seed))

    @property
    def cache_path(self) -> Path:
        return Path(self.cache_dir) if self.cache_dir else Path(self.out_dir) / "cache"

    def to_json(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["train"]["split"] = list(self.train.split)
        return doc


def _build(cls, doc: Any, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(names))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        nested = _NESTED.get((cls, key))
        if nested is not None:
            value = _build(nested, value, f"{where}.{key}")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


_NESTED = {
    (PipelineConfig, "scorer"): ScorerWeights,
    (PipelineConfig, "deob"): DeobConfig,
    (PipelineConfig, "encoder"): EncoderConfig,
    (PipelineConfig, "partition"): PartitionConfig,
    (PipelineConfig, "train"): TrainConfig,
    (DeobConfig, "llm"): LlmClientConfig,
}


def config_from_dict(doc: dict) -> PipelineConfig:
    cfg = _build(PipelineConfig, doc, "config")
    unknown = sorted(set(cfg.model) - set(MODEL_KEYS))
    if unknown:
        raise ConfigError(f"config.model: unknown key(s) {', '.join(unknown)}")
    if "mlp" in cfg.model:
        cfg.model["mlp"] = tuple(cfg.model["mlp"])
    try:
        cfg.model_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config.model: {exc}") from None
    return cfg


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(doc)


def _pool_map(fn: Callable, items: list, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# -- score -----------------------------------------------------------------------------------

def run_score(manifest: str | Path, out: str | Path, cfg: PipelineConfig,
              workers: int = 1) -> dict:
    rows = read_manifest(manifest)
    errors = []

    def one(row: ManifestRow):
        try:
            b = obfuscation_score(SourceFile.from_path(row.path), cfg.scorer)
        except (OSError, ValueError, LexError) as exc:
            errors.append({"path": str(row.path), "error": f"{type(exc).__name__}: {exc}"})
            return None
        return ScoreRow(str(row.path), b,
                        gate(b, cfg.scorer, cfg.deob.force_gate_on_parse_failure))

    scored = [r for r in _pool_map(one, rows, workers) if r is not None]
    buf = io.StringIO()
    write_report(scored, buf)
    atomic_write(Path(out), buf.getvalue())
    return {"files": len(rows), "scored": len(scored), "gated": sum(r.gated for r in scored),
            "errors": sorted(errors, key=lambda e: e["path"]), "report": str(out)}


# -- deob -------------------------------------------------------------------------------------

def run_deob(manifest: str | Path, out_dir: str | Path, cfg: PipelineConfig,
             workers: int = 1, client=None) -> dict:
    """Write cleaned sources, a manifest pointing at them, and report.json."""
    rows = read_manifest(manifest)
    out = Path(out_dir)
    report, outcomes = batch_deobfuscate(rows, cfg.scorer, cfg.deob, cfg.cache_path / "deob",
                                         workers, client)
    width = max(5, len(str(len(rows))))
    new_rows, files = [], []
    for i, (row, o) in enumerate(zip(rows, outcomes)):
        files.append({"path": str(row.path), "s_obf": o.s_obf, "gated": o.gated,
                      "engine": o.engine, "accepted": o.accepted, "error": o.error})
        if o.code is None:
            continue
        target = out / "samples" / f"{i:0{width}d}-{row.path.stem}.js"
        atomic_write(target, o.code)
        new_rows.append(ManifestRow(target, row.label, row.tag))
    stable = report.to_json()
    run_counters = {"service_calls": stable.pop("service_calls"),
                    "cache_hits": stable.pop("cache_hits")}
    atomic_write(out / "report.json", json.dumps({"report": stable, "files": files},
                                                  indent=1, sort_keys=True))
    atomic_write(out / "manifest.jsonl", manifest_lines(new_rows, base=out))
    return {**stable, **run_counters, "manifest": str(out / "manifest.jsonl")}


# -- build ------------------------------------------------------------------------------------

@dataclass
class BuiltRecord:
    graph: CodeGraph
    part: Partition
    label: int | None
    source: str


def build_one(code: str, cfg: PipelineConfig, label: int | None = None
              ) -> tuple[CodeGraph, Partition]:
    graph = build_graph(parse(SourceFile.from_text(code)), label)
    p = partition(graph, cfg.partition.m, cfg.partition.seed, cfg.partition.epsilon)
    return graph, p


def _build_digest(cfg: PipelineConfig) -> str:
    return _sha(json.dumps({"partition": dataclasses.asdict(cfg.partition),
                            "graph": "v1"}, sort_keys=True))[:16]


def run_build(manifest: str | Path, out_dir: str | Path, cfg: PipelineConfig,
              workers: int = 1) -> dict:
    rows = read_manifest(manifest)
    out = Path(out_dir)
    index_path = out / "index.jsonl"
    previous = {}
    if index_path.exists():
        for line in index_path.read_text().splitlines():
            entry = json.loads(line)
            previous[entry["key"]] = entry
    bdig = _build_digest(cfg)
    width = max(5, len(str(len(rows))))

    def one(item):
        i, row = item
        try:
            code = SourceFile.from_path(row.path).text
        except (OSError, ValueError) as exc:
            return None, {"path": str(row.path), "error": f"{type(exc).__name__}: {exc}"}
        key = f"{_sha(code)[:24]}-{bdig}"
        stem = f"{i:0{width}d}-{row.path.stem}"
        entry = {"key": key, "source": str(row.path), "label": row.label, "tag": row.tag,
                 "graph": f"{stem}.graph.json", "partition": f"{stem}.part.json"}
        old = previous.get(key)
        if old and old["graph"] == entry["graph"] and (out / old["graph"]).exists() \
                and (out / old["partition"]).exists():
            return {**old, "label": row.label, "tag": row.tag, "cached": True}, None
        try:
            graph, p = build_one(code, cfg, row.label)
        except (ParseError, LexError) as exc:
            return None, {"path": str(row.path), "error": f"{type(exc).__name__}: {exc}"}
        atomic_write(out / entry["graph"], dumps_record(graph, row.label))
        atomic_write(out / entry["partition"], json.dumps(p.to_json()))
        return {**entry, "n": graph.n, "edges": int(len(graph.edges)),
                "edge_cut": p.edge_cut, "cached": False}, None

    results = _pool_map(one, list(enumerate(rows)), workers)
    entries = [e for e, _ in results if e is not None]
    errors = [err for _, err in results if err is not None]
    cached = sum(e.pop("cached") for e in entries)
    atomic_write(index_path, "".join(json.dumps(e, sort_keys=True) + "\n" for e in entries))
    return {"files": len(rows), "built": len(entries) - cached, "cached": cached,
            "errors": errors, "index": str(index_path)}


def load_index(index: str | Path, d_pos: int = 32, value_buckets: int | None = None
               ) -> tuple[list[dict], list[GraphInput]]:
    index = Path(index)
    entries, inputs = [], []
    for line in index.read_text().splitlines():
        e = json.loads(line)
        g = from_graph_record((index.parent / e["graph"]).read_text())
        p = Partition.from_json((index.parent / e["partition"]).read_text())
        gi = prepare(g, p, d_pos, value_buckets=value_buckets)
        gi.label = e["label"]
        entries.append(e)
        inputs.append(gi)
    return entries, inputs


# -- train / eval ------------------------------------------------------------------------------

def run_train(index: str | Path, out_dir: str | Path, cfg: PipelineConfig,
              progress: Callable[[Any], None] | None = None) -> dict:
    out = Path(out_dir)
    entries, inputs = load_index(index, cfg.encoder.d_pos, cfg.encoder.value_buckets)
    labels = [g.label for g in inputs]
    if any(lbl is None for lbl in labels):
        raise ValueError("every training record needs a label")
    tr_i, va_i, te_i = split(labels, cfg.train)
    model = ClusterGT(cfg.model_config(), seed=cfg.train.seed)
    result = train(model, [inputs[i] for i in tr_i], [inputs[i] for i in va_i], cfg.train,
                   log=progress)
    ckpt = out / "checkpoint.json"
    model.save(ckpt, {"best_epoch": result.best_epoch,
                      "pipeline": cfg.to_json()})
    atomic_write(out / "history.csv", history_csv(result.history))
    atomic_write(out / "split.json", json.dumps(
        {"index": str(Path(index).resolve()), "train": tr_i, "val": va_i, "test": te_i}))
    return {"checkpoint": str(ckpt), "epochs": len(result.history),
            "best_epoch": result.best_epoch, "best_val_f1": result.best_val_f1,
            "initial_loss": result.initial_loss,
            "final_loss": result.history[-1].train_loss,
            "stopped_early": result.stopped_early,
            "sizes": {"train": len(tr_i), "val": len(va_i), "test": len(te_i)}}


def run_eval(checkpoint: str | Path, split_name: str, out_dir: str | Path | None = None,
             index: str | Path | None = None) -> dict:
    checkpoint = Path(checkpoint)
    model, extra = ClusterGT.load(checkpoint)
    split_doc = json.loads((checkpoint.parent / "split.json").read_text())
    entries, inputs = load_index(index or split_doc["index"], model.cfg.d_pos,
                                 model.cfg.value_buckets)
    if split_name == "all":
        chosen = list(range(len(inputs)))
    elif split_name in ("train", "val", "test"):
        chosen = split_doc[split_name]
    else:
        raise ValueError(f"unknown split {split_name!r}")
    metrics, points, scores = evaluate(model, [inputs[i] for i in chosen])
    out = Path(out_dir) if out_dir else checkpoint.parent
    atomic_write(out / "metrics.csv", metrics_csv({split_name: metrics}))
    atomic_write(out / "roc.csv", roc_csv(points))
    return {"split": split_name, "n": len(chosen), **metrics.to_json(),
            "metrics": str(out / "metrics.csv"), "roc": str(out / "roc.csv")}


# -- predict --------------------------------------------------------------------------------------

def run_predict(checkpoint: str | Path, path: str | Path, client=None) -> dict:
    model, extra = ClusterGT.load(checkpoint)
    cfg = config_from_dict(extra["pipeline"]) if "pipeline" in extra else PipelineConfig()
    source = SourceFile.from_path(Path(path))
    b = obfuscation_score(source, cfg.scorer)
    code, engine = source.text, "passthrough"
    if gate(b, cfg.scorer, cfg.deob.force_gate_on_parse_failure):
        deob = Deobfuscator(cfg.deob, cfg.scorer, cfg.cache_path / "deob", client)
        result, _ = deob.transform(code)
        engine = result.engine
        if result.verdict.accepted:
            code = result.code
    graph, p = build_one(code, cfg)
    score = model.predict_proba(prepare(graph, p, model.cfg.d_pos,
                                                value_buckets=model.cfg.value_buckets))
    return {"path": str(path), "score": score, "label": int(score >= 0.5),
            "s_obf": b.s_obf, "engine_used": engine}


# -- corpus ---------------------------------------------------------------------------------------

def run_gen_corpus(n_benign: int, n_malicious: int, seed: int, out_dir: str | Path,
                   opts: CorpusOptions = CorpusOptions()) -> dict:
    manifest = generate_corpus(n_benign, n_malicious, seed, out_dir, opts)
    return {"manifest": str(manifest), "n_benign": n_benign, "n_malicious": n_malicious,
            "seed": seed}
