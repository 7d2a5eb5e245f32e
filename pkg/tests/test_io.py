import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from ddsde.fbm import TimeGrid
from ddsde.field import synth_besov_field
from ddsde.io import (
    dumps,
    read_field,
    read_flow,
    read_measure,
    read_table,
    write_ensemble,
    write_field,
    write_flow,
    write_measure,
)
from ddsde.measure import EmpiricalMeasure, MeasureFlow
from ddsde.solver import Ensemble

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_field_roundtrip(tmp_path):
    f = synth_besov_field(-0.4, 4, 2, 3, output_dim=2, period=7.5)
    assert read_field(write_field(f, tmp_path / "f.json")) == f


@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=20), st.integers(0, 2**32))
def test_measure_roundtrip(tmp_path_factory, pts, seed):
    w = np.random.default_rng(seed).uniform(0.1, 1.0, len(pts))
    mu = EmpiricalMeasure.normalized(np.array(pts), w)
    path = tmp_path_factory.mktemp("m") / "mu.csv"
    back = read_measure(write_measure(mu, path))
    assert np.array_equal(back.points, mu.points) and np.array_equal(back.weights, mu.weights)


def test_measure_columns(tmp_path):
    write_measure(EmpiricalMeasure([[1.0, 2.0, 3.0]]), tmp_path / "m.csv")
    cols, rows = read_table(tmp_path / "m.csv")
    assert cols == ["w", "x_1", "x_2", "x_3"] and rows == [["1.0", "1.0", "2.0", "3.0"]]


def test_flow_roundtrip(tmp_path):
    g = TimeGrid(0.5, 11)
    gen = np.random.default_rng(0)
    flow = MeasureFlow(g, [EmpiricalMeasure(gen.normal(size=(4, 2))) for _ in range(12)])
    write_flow(flow, tmp_path / "flow")
    assert (tmp_path / "flow" / "t_00.csv").exists() and (tmp_path / "flow" / "manifest.json").exists()
    back = read_flow(tmp_path / "flow")
    assert back.grid == g
    assert all(np.array_equal(a.points, b.points) for a, b in zip(back.measures, flow.measures))


def test_ensemble_csv(tmp_path):
    ens = Ensemble(TimeGrid(1.0, 2), np.arange(12.0).reshape(2, 3, 2))
    cols, rows = read_table(write_ensemble(ens, tmp_path / "e.csv"))
    assert cols == ["particle", "t", "x_1", "x_2"]
    assert rows[4] == ["1", "0.5", "8.0", "9.0"]


def test_dumps_deterministic():
    doc = {"b": np.float64(0.1), "a": [np.int64(2), np.inf], "c": np.bool_(True), "d": np.arange(2)}
    assert dumps(doc) == '{\n  "a": [\n    2,\n    "inf"\n  ],\n  "b": 0.1,\n  "c": true,\n  "d": [\n    0,\n    1\n  ]\n}\n'
