"""Node-count sweep: train and test per size band, comparing cluster counts.

Programs are grown from the corpus cover blocks until they reach a target
node count, with one benign or malicious-like snippet placed at a random
position, so the label signal shrinks relative to graph size as the band
grows.  Only graphs whose node count falls inside the band are kept.

The defaults use a narrower model than the pipeline (two layers, width 64)
and unobfuscated programs so the whole sweep runs in about half an hour on
one CPU.
"""
from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field
from typing import Callable

from .corpus import (BENIGN_EXTRAS, COVER_BLOCKS, MALICIOUS_EXTRAS, CorpusOptions,
                     _transform)
from .frontend.parser import parse_text
from .graph import CodeGraph, build_graph
from .model import ClusterGT, ClusterGTConfig, prepare
from .partition import partition
from .train import TrainConfig, evaluate, split, train


SMALL_MODEL = {"layers": 2, "d": 64, "heads": 4, "d_type": 24, "d_value": 24, "d_pos": 16,
               "mlp": (64, 32, 1)}


@dataclass(frozen=True)
class SweepConfig:
    bands: tuple[int, ...] = (1000, 2000, 4000)
    tolerance: float = 0.2
    per_class: int = 150
    ms: tuple[int, ...] = (1, 8)
    seed: int = 0
    obfuscate_prob: float = 0.0
    model: dict = field(default_factory=lambda: dict(SMALL_MODEL))
    train: TrainConfig = TrainConfig(lr=2e-3, max_epochs=30, patience=30, batch_size=8,
                                     split=(0.6, 0.15, 0.25))

    def band_edges(self, band: int) -> tuple[int, int]:
        return int(band * (1 - self.tolerance)), int(band * (1 + self.tolerance))


@dataclass
class BandResult:
    band: int
    edges: tuple[int, int]
    n_graphs: int
    mean_nodes: float
    f1: dict[int, float]
    auc: dict[int, float]


def _count(code: str) -> int:
    return build_graph(parse_text(code)).n


def band_program(label: int, lo: int, hi: int, rng: random.Random,
                 opts: CorpusOptions) -> str:
    """Cover blocks around one labelled snippet, sized to land in [lo, hi]."""
    target = rng.randint(lo + (hi - lo) // 10, hi - (hi - lo) // 10)
    extra_fn = rng.choice(MALICIOUS_EXTRAS if label else BENIGN_EXTRAS)
    extra = _transform(extra_fn(rng), rng, heavy=False, opts=opts)
    total = _count(extra)
    blocks: list[str] = []
    while True:
        block = _transform(rng.choice(COVER_BLOCKS)(rng), rng, heavy=False, opts=opts)
        size = _count(block)
        if total + size > hi and blocks:
            break
        blocks.append(block)
        total += size
        if total >= target:
            break
    blocks.insert(rng.randint(0, len(blocks)), extra)
    return "\n".join(b.strip("\n") for b in blocks) + "\n"


def band_graphs(band: int, cfg: SweepConfig) -> list[CodeGraph]:
    lo, hi = cfg.band_edges(band)
    rng = random.Random(f"{cfg.seed}:{band}")
    opts = CorpusOptions(pack_prob=0.0, obfuscate_prob=cfg.obfuscate_prob)
    graphs = []
    labels = [0] * cfg.per_class + [1] * cfg.per_class
    rng.shuffle(labels)
    for label in labels:
        for _ in range(20):
            g = build_graph(parse_text(band_program(label, lo, hi, rng, opts)), label)
            if lo <= g.n <= hi:
                graphs.append(g)
                break
        else:
            raise RuntimeError(f"could not fit a program into band [{lo}, {hi}]")
    return graphs


def run_sweep(cfg: SweepConfig = SweepConfig(),
              log: Callable[[str], None] | None = None) -> list[BandResult]:
    results = []
    for band in cfg.bands:
        graphs = band_graphs(band, cfg)
        labels = [g.label for g in graphs]
        tr_i, va_i, te_i = split(labels, dataclasses.replace(cfg.train, seed=cfg.seed))
        f1s, aucs = {}, {}
        for m in cfg.ms:
            mcfg = ClusterGTConfig(**{**cfg.model, "m": m})
            inputs = [prepare(g, partition(g, m, cfg.seed), mcfg.d_pos) for g in graphs]
            model = ClusterGT(mcfg, seed=cfg.seed)
            train(model, [inputs[i] for i in tr_i], [inputs[i] for i in va_i],
                  dataclasses.replace(cfg.train, seed=cfg.seed))
            metrics, _, _ = evaluate(model, [inputs[i] for i in te_i])
            f1s[m], aucs[m] = metrics.f1, metrics.auc
            if log:
                log(f"band {band} m={m}: f1={metrics.f1:.4f} auc={metrics.auc:.4f}")
        results.append(BandResult(band, cfg.band_edges(band), len(graphs),
                                  sum(g.n for g in graphs) / len(graphs), f1s, aucs))
    return results
