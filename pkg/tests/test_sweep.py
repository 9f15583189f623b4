import dataclasses

import numpy as np

from obfugraph.model import prepare
from obfugraph.partition import partition
from obfugraph.sweep import SweepConfig, band_graphs, run_sweep
from obfugraph.train import TrainConfig

from toys import toy_graph

TINY = {"layers": 1, "d": 8, "heads": 2, "d_type": 3, "d_value": 3, "d_pos": 2,
        "value_buckets": 16384, "mlp": (8, 1)}


def small_cfg(**kw) -> SweepConfig:
    return SweepConfig(bands=(150,), per_class=10, model=TINY,
                       train=TrainConfig(max_epochs=2, patience=2, batch_size=8,
                                         split=(0.6, 0.15, 0.25)), **kw)


def test_band_edges():
    assert SweepConfig().band_edges(1000) == (800, 1200)
    assert SweepConfig(tolerance=0.1).band_edges(4000) == (3600, 4400)


def test_band_graphs_land_in_band_and_balance():
    cfg = small_cfg()
    lo, hi = cfg.band_edges(150)
    graphs = band_graphs(150, cfg)
    assert len(graphs) == 20
    assert all(lo <= g.n <= hi for g in graphs)
    assert sorted(g.label for g in graphs) == [0] * 10 + [1] * 10


def test_band_graphs_deterministic():
    a = band_graphs(150, small_cfg())
    b = band_graphs(150, small_cfg())
    assert all(np.array_equal(x.edges, y.edges) and np.array_equal(x.value_buckets,
                                                                    y.value_buckets)
               for x, y in zip(a, b))
    c = band_graphs(150, dataclasses.replace(small_cfg(), seed=1))
    assert any(x.n != y.n for x, y in zip(a, c))


def test_run_sweep_reports_every_band_and_m():
    results = run_sweep(small_cfg(ms=(1, 4)))
    (r,) = results
    assert r.band == 150 and r.n_graphs == 20
    assert set(r.f1) == set(r.auc) == {1, 4}
    assert all(0.0 <= v <= 1.0 for v in [*r.f1.values(), *r.auc.values()])
    again = run_sweep(small_cfg(ms=(1, 4)))
    assert again[0].f1 == r.f1 and again[0].auc == r.auc


def test_prepare_folds_buckets_into_smaller_table():
    g = toy_graph(20, 3, buckets=16384)
    part = partition(g, 2, 0)
    full = prepare(g, part).buckets
    folded = prepare(g, part, value_buckets=64).buckets
    assert np.array_equal(folded, full % 64)
    assert folded.max() < 64
