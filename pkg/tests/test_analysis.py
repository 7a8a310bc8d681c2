import numpy as np
import pytest

from fdnpiv.analysis import (capacity_report, data_density, detect_capacity_drop,
                             extract_capacity)
from fdnpiv.summary import CurveBand

GRID = np.linspace(0, 40, 200)


def triangular(o, peak=17.0, q_max=500.0, drop=0.10, slope_after=0.0):
    free = q_max * o / peak
    cong = q_max * (1 - drop) + slope_after * (o - peak)
    return np.where(o <= peak, free, cong)


def band(mean, half):
    half = np.broadcast_to(half, mean.shape)
    return CurveBand(GRID, mean, mean - half, mean + half, mean - half, mean + half, 0.05,
                     1.0, half / 2)


def test_capacity_at_peak():
    b = band(triangular(GRID), 5.0)
    cap = extract_capacity(b)
    res = GRID[1] - GRID[0]
    assert abs(cap.o_c - 17) <= res
    assert cap.q_c == pytest.approx(500 * cap.o_c / 17)
    assert not cap.boundary and cap.q_c_sd == 2.5


def test_ties_go_to_smaller_occupancy():
    mean = np.zeros(GRID.size)
    mean[[50, 120]] = 10
    assert extract_capacity(band(mean, 1.0)).index == 50


def test_boundary_capacity_flag():
    cap = extract_capacity(band(GRID * 2.0, 1.0))
    assert cap.boundary and cap.index == GRID.size - 1


def test_drop_significance_tight_and_wide():
    mean = triangular(GRID)
    tight = capacity_report(band(mean, 5.0))
    assert tight.significant is True
    assert tight.drop_pct == pytest.approx(10, abs=2)
    assert tight.q_c_per_hour == pytest.approx(12 * tight.q_c)
    wide = capacity_report(band(mean, 25.0))
    assert wide.significant is False
    assert wide.drop_pct == tight.drop_pct


def test_backward_bend():
    rep = capacity_report(band(triangular(GRID, slope_after=-8.0), 3.0), window=2.0)
    assert rep.backward_bend is True
    flat = capacity_report(band(triangular(GRID), 3.0), window=2.0)
    assert flat.backward_bend is False


def test_density_floor_restricts_search():
    mean = triangular(GRID)
    mean[-1] = 10_000.0  # spurious spike where there is no data
    support = np.random.default_rng(0).uniform(0, 30, 5000)
    rep = capacity_report(band(mean, 5.0), support)
    assert abs(rep.o_c - 17) <= GRID[1] - GRID[0]


def test_indeterminate_drop_without_data():
    mean = triangular(GRID)
    support = np.concatenate([np.linspace(0, 18, 3000)])
    rep = capacity_report(band(mean, 5.0), support, window=10.0)
    # the only supported points past o_c lie within the data range
    assert rep.significant is not None
    sparse = np.linspace(0, 17.05, 3000)
    cap = extract_capacity(band(mean, 5.0), sparse)
    rep2 = detect_capacity_drop(band(mean, 5.0), cap, sparse, window=10.0, cell_width=0.1)
    assert rep2.significant is None and rep2.backward_bend is None


def test_data_density():
    support = np.array([0.0, 0.2, 0.4, 3.0])
    np.testing.assert_allclose(data_density([0.0, 3.0, 10.0], support, 1.0), [0.75, 0.25, 0.0])


def test_no_supported_point_raises():
    with pytest.raises(ValueError):
        extract_capacity(band(triangular(GRID), 1.0), np.full(10, 100.0))


def test_report_as_dict_round_trip():
    d = capacity_report(band(triangular(GRID), 5.0)).as_dict()
    assert set(d) >= {"o_c", "q_c", "o_star", "q_star", "drop_pct", "significant"}


def test_half_width_ten_example():
    # 500 -> 450 with half-width 10: 490 > 460, so the drop is significant
    rep = capacity_report(band(triangular(GRID), 10.0))
    assert rep.significant is True
    assert rep.q_c - 10 > rep.q_star + 10


def test_flat_after_peak_not_significant():
    mean = np.minimum(500 * GRID / 17, 500.0)
    rep = capacity_report(band(mean, 5.0))
    assert rep.drop_pct == pytest.approx(0.0, abs=1e-9)
    assert rep.significant is False


def test_hourly_conversion():
    mean = np.where(GRID <= GRID[84], 511.75 * GRID / GRID[84], 470.0)
    rep = capacity_report(band(mean, 1.0))
    assert rep.q_c == pytest.approx(511.75)
    assert f"{rep.q_c_per_hour:.2f}" == "6141.00"


@pytest.mark.parametrize("k", [0.5, 3.0])
def test_scale_and_shift_equivariance(k):
    b = band(triangular(GRID), 6.0)
    base = capacity_report(b)
    s = capacity_report(b.scaled(k))
    assert s.q_c == pytest.approx(k * base.q_c) and s.q_star == pytest.approx(k * base.q_star)
    assert (s.o_c, s.o_star, s.significant) == (base.o_c, base.o_star, base.significant)
    assert s.drop_pct == pytest.approx(base.drop_pct)
    sh = capacity_report(b.shifted(4.0))
    assert sh.o_c == pytest.approx(base.o_c + 4) and sh.o_star == pytest.approx(base.o_star + 4)
    assert base.o_c < base.o_star
    if base.significant:
        assert base.drop_pct > 0
