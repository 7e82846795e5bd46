import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from heightlab.heightgrid import BevGrid, HeightMap
from heightlab.metrics import acc_at, evaluate, frame_average, mae, pooled, rmse

G = BevGrid(1, 4)


def hm(vals, grid=G):
    return HeightMap(grid, np.asarray(vals, dtype=float).reshape(grid.shape))


def test_frozen_oracle():
    p, g = hm([0.0, 0.1, 0.3, np.nan]), hm([0.0, 0.0, 0.0, 0.0])
    r = evaluate(p, g)
    assert r.n_cells == 3
    assert r.mae == pytest.approx(0.4 / 3, abs=1e-15)
    assert r.rmse == pytest.approx(math.sqrt(0.1 / 3), abs=1e-15)
    # strict "<": an error of exactly 0.1 does not count at 0.1
    assert r.acc == {0.05: pytest.approx(1 / 3), 0.1: pytest.approx(1 / 3), 0.2: pytest.approx(2 / 3)}


def test_errors_on_mismatch_and_empty():
    with pytest.raises(ValueError):
        mae(hm([0, 0, 0, 0]), HeightMap(BevGrid(2, 2), np.zeros((2, 2))))
    with pytest.raises(ValueError):
        rmse(hm([np.nan] * 4), hm([0, 0, 0, 0]))


def test_pooled_versus_frame_average():
    a = (hm([0.1, np.nan, np.nan, np.nan]), hm([0, 0, 0, 0]))
    b = (hm([0.3, 0.3, 0.3, 0.3]), hm([0, 0, 0, 0]))
    assert pooled([a, b]).mae == pytest.approx((0.1 + 1.2) / 5)
    assert frame_average([evaluate(*a), evaluate(*b)]).mae == pytest.approx(0.2)


def test_csv_and_table():
    r = evaluate(hm([0.0, 0.1, 0.3, 0.0]), hm([0, 0, 0, 0]))
    assert r.csv_header() == "mae,rmse,acc@0.05,acc@0.1,acc@0.2,n_cells"
    assert r.csv_row().endswith(",4")
    assert "MAE" in r.table("x")


finite = st.floats(-10, 10, allow_nan=False)


@given(arrays(np.float64, 12, elements=finite), arrays(np.float64, 12, elements=finite))
@settings(max_examples=80, deadline=None)
def test_metric_properties(p, g):
    grid = BevGrid(3, 4)
    P, T = hm(p, grid), hm(g, grid)
    assert rmse(P, T) >= mae(P, T) - 1e-12
    assert mae(P, T) == pytest.approx(mae(T, P))
    accs = [acc_at(P, T, t) for t in (0.05, 0.1, 0.2, 1.0)]
    assert accs == sorted(accs)
    assert mae(P, P) == 0.0 and acc_at(P, P, 1e-9) == 1.0
