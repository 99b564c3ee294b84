import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fingerloc.propagation import (MIN_DISTANCE_M, PathLossParams, Room, make_square_grid, path_loss,
                                   random_locations, sample_rssi, simulate_database, simulate_test_set)

P = PathLossParams()


def test_path_loss_hand_values():
    assert path_loss(1.0, P) == pytest.approx(139.05, abs=1e-9)
    assert path_loss(10.0, P) == pytest.approx(155.45, abs=1e-9)
    only_l0 = PathLossParams(l0_db=40.22, gamma_pl=1e-12, lc_db=0.0, lw_db=0.0, k_walls=0)
    assert path_loss(1.0, only_l0) == pytest.approx(40.22)


def test_path_loss_clamps_and_rejects():
    assert path_loss(0.0, P) == path_loss(MIN_DISTANCE_M, P)
    assert path_loss(0.01, P) == path_loss(MIN_DISTANCE_M, P)
    for bad in (np.nan, np.inf):
        with pytest.raises(ValueError):
            path_loss(bad, P)
    np.testing.assert_allclose(path_loss(np.array([1.0, 10.0]), P), [139.05, 155.45])


@given(st.floats(1.0, 1e4), st.floats(1.0, 1e4))
def test_path_loss_monotone(a, b):
    lo, hi = sorted((a, b))
    assert path_loss(lo, P) <= path_loss(hi, P)


def test_params_validation():
    with pytest.raises(ValueError):
        PathLossParams(gamma_pl=0)
    with pytest.raises(ValueError):
        PathLossParams(lambda_exp=0)
    with pytest.raises(ValueError):
        PathLossParams(k_walls=-1)


def test_sample_rssi_mean_and_bound():
    rng = np.random.default_rng(0)
    draws = sample_rssi((0.0, 0.0), (1.0, 0.0), P, rng, size=100_000)
    ceiling = P.ptx_dbm - path_loss(1.0, P)
    assert np.all(draws <= ceiling)
    fading = ceiling - draws
    se = fading.std() / np.sqrt(len(fading))
    assert abs(fading.mean() - 1 / P.lambda_exp) < 3 * se
    assert draws.mean() == pytest.approx(-121.05, abs=0.1)


def test_sample_rssi_deterministic_and_noise_limit():
    a = sample_rssi((0, 0), (3, 4), P, np.random.default_rng(7), size=5)
    b = sample_rssi((0, 0), (3, 4), P, np.random.default_rng(7), size=5)
    np.testing.assert_array_equal(a, b)
    quiet = PathLossParams(lambda_exp=1e12)
    x = sample_rssi((0, 0), (3, 4), quiet, np.random.default_rng(1))
    assert x == pytest.approx(quiet.ptx_dbm - path_loss(5.0, quiet), abs=1e-9)


def test_square_grid_counts():
    assert len(make_square_grid(Room(20, 10), 1.0)) == 200
    assert len(make_square_grid(Room(10, 10), 1.0)) == 100
    g = make_square_grid(Room(2, 1), 1.0)
    np.testing.assert_allclose(g.points, [[0.5, 0.5], [1.5, 0.5]])
    with pytest.raises(ValueError):
        make_square_grid(Room(2, 1), 1.5)


def test_room_invariants():
    with pytest.raises(ValueError):
        Room(0, 10)
    with pytest.raises(ValueError):
        Room(5, 5, ((6.0, 1.0),))
    assert Room.with_corner_aps(20, 10).ap_ids == ["AP1", "AP2", "AP3", "AP4"]


def test_simulate_database_shape_and_determinism():
    room = Room.with_corner_aps(20, 10)
    grid = make_square_grid(room, 1.0)
    rows = simulate_database(room, grid, 5, P, np.random.default_rng(3))
    assert len(rows) == 200
    assert all(len(r.rssi) == 4 and all(len(v) == 5 for v in r.rssi.values()) for r in rows)
    again = simulate_database(room, grid, 5, P, np.random.default_rng(3))
    assert [r.rssi for r in rows] == [r.rssi for r in again]
    tiny = simulate_database(Room(1, 1, ((0.0, 0.0),)), make_square_grid(Room(1, 1), 1.0), 1, P,
                             np.random.default_rng(0))
    assert len(tiny) == 1 and len(tiny[0].rssi["AP1"]) == 1
    with pytest.raises(ValueError):
        simulate_database(room, grid, 0, P, np.random.default_rng(0))


def test_test_set_inside_room():
    room = Room.with_corner_aps(20, 10)
    assert len(simulate_test_set(room, 1000, 5, P, np.random.default_rng(0))) == 1000
    pts = random_locations(room, 10_000, np.random.default_rng(1))
    assert np.all((pts >= 0) & (pts <= [20, 10]))
    with pytest.raises(ValueError):
        simulate_test_set(room, 0, 5, P, np.random.default_rng(0))


@settings(max_examples=25)
@given(st.floats(0.0, 50.0), st.integers(0, 2**31))
def test_rssi_never_exceeds_noise_free_level(d, seed):
    x = sample_rssi((0.0, 0.0), (d, 0.0), P, np.random.default_rng(seed), size=50)
    assert np.all(x <= P.ptx_dbm - path_loss(d, P))
