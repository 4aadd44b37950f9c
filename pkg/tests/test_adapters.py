import numpy as np
import pytest

from diffnet.adapters import (
    EstimationError, GeoStation, ParseError, destination, distance_matrix, epicenter_estimate,
    fit_gamma_moments, fit_two_regime_gaussian, geographic_midpoint, haversine, load_series_csv,
    load_stations_csv, locate_epicenter, potential_parents_from_changepoints, potential_parents_geo,
    synthetic_event, write_series_csv, write_stations_csv,
)
from diffnet.gibbs import McmcConfig
from diffnet.model import NULL, DomainError, InfectionState, ObservationSet


class TestSeriesCsv:
    def test_well_formed(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b\n1,2\n3,4\n5,6\n")
        d = load_series_csv(p)
        assert (d.n_nodes, d.n_times) == (2, 3)
        assert d.names == ("a", "b")
        assert d.values[1].tolist() == [2, 4, 6]

    @pytest.mark.parametrize("text,where", [
        ("a,b\n1,2\n3\n", "row 3"),
        ("a,b\n1,x\n", "column 2"),
        ("a,b\n1,\n", "row 2, column 2"),
        ("1,2\n3,4\n", "row 1"),
        ("", "empty"),
        ("a,b\n", "no data"),
    ])
    def test_errors(self, tmp_path, text, where):
        p = tmp_path / "d.csv"
        p.write_text(text)
        with pytest.raises(ParseError, match=where):
            load_series_csv(p)

    def test_round_trip(self, tmp_path, rng):
        d = ObservationSet(rng.normal(size=(3, 7)), ("x", "y", "z"))
        write_series_csv(tmp_path / "d.csv", d)
        back = load_series_csv(tmp_path / "d.csv")
        assert np.array_equal(back.values, d.values) and back.names == d.names


def test_changepoint_parents():
    assert potential_parents_from_changepoints([1, 2, 3]) == ((), (0,), (0, 1))
    assert potential_parents_from_changepoints([4, 4, 4]) == ((), (), ())
    assert potential_parents_from_changepoints([5, 1, 5]) == ((1,), (), (1,))


class TestGeo:
    # two stations 100 km apart along a meridian
    LATS = [0.0, 100 / 111.19492664455873]
    LONS = [0.0, 0.0]

    def test_distance(self):
        assert distance_matrix(self.LATS, self.LONS)[0, 1] == pytest.approx(100.0, rel=1e-9)
        assert haversine(0, 0, 0, 180) == pytest.approx(np.pi * 6371.0)

    def test_gate_examples(self):
        pp, _, _ = potential_parents_geo(self.LATS, self.LONS, [0, 10], 13.0, 10.0)
        assert 0 in pp[1] and 1 not in pp[0]
        pp, _, _ = potential_parents_geo(self.LATS, self.LONS, [0, 5], 13.0, 10.0)
        assert 0 not in pp[1]

    def test_dummies(self):
        cp = np.array([3.0, 12.0])
        pp, dt, _ = potential_parents_geo(self.LATS, self.LONS, cp, 13.0, 10.0)
        assert dt == pytest.approx(3 - 10 / 13)
        assert pp[0][-1] == 2 and pp[1][-1] == 3
        assert pp[2] == () and pp[3] == ()
        for i in range(2):
            for j in range(2):
                if i != j:
                    assert 2 + j not in pp[i]

    def test_shift_invariance_and_monotone_velocity(self, rng):
        lats, lons = rng.uniform(-1, 1, 8), rng.uniform(-1, 1, 8)
        cp = rng.integers(1, 40, 8).astype(float)
        base, t0, _ = potential_parents_geo(lats, lons, cp, 13.0, 10.0)
        shifted, t1, _ = potential_parents_geo(lats, lons, cp + 17, 13.0, 10.0)
        assert base == shifted and t1 == pytest.approx(t0 + 17)
        prev = None
        for v in (2.0, 5.0, 13.0, 40.0, 1e6):
            pp, _, _ = potential_parents_geo(lats, lons, cp, v, 10.0)
            if prev is not None:
                assert all(set(a) <= set(b) for a, b in zip(prev, pp))
            prev = pp

    def test_invalid(self):
        with pytest.raises(DomainError):
            potential_parents_geo(self.LATS, self.LONS, [0, 1], 0.0, 10.0)
        with pytest.raises(DomainError):
            GeoStation("x", 91.0, 0.0, np.zeros(3))

    def test_destination_distance(self):
        lat, lon = destination(-41.0, 174.0, 63.0, 55.0)
        assert haversine(-41.0, 174.0, lat, lon) == pytest.approx(55.0, rel=1e-9)


class TestMidpoint:
    def test_single(self):
        s = InfectionState(np.array([1, NULL]), np.array([2, NULL]), np.zeros((2, 2)))
        # one station, node 1 is its dummy
        assert epicenter_estimate(s, [12.5], [-7.25]) == pytest.approx((12.5, -7.25))

    def test_symmetric(self):
        c = (-38.0, 176.0)
        a = destination(*c, 30.0, 20.0)
        b = destination(*c, 210.0, 20.0)
        lat, lon = geographic_midpoint([a[0], b[0]], [a[1], b[1]])
        assert abs(lat - c[0]) < 1e-6 and abs(lon - c[1]) < 1e-6

    def test_none_dummy_parented(self):
        s = InfectionState(np.array([NULL, 0]), np.array([1, 2]), np.zeros((2, 2)))
        with pytest.raises(EstimationError):
            epicenter_estimate(s, [0, 1], [0, 1])

    def test_antipodal(self):
        with pytest.raises(EstimationError):
            geographic_midpoint([0, 0], [0, 180])


def test_fit_gamma_moments(rng):
    x = rng.gamma(3.0, 2.0, 200000)
    k, th = fit_gamma_moments(x)
    assert k == pytest.approx(3.0, rel=0.03) and th == pytest.approx(2.0, rel=0.03)
    with pytest.raises(EstimationError):
        fit_gamma_moments([1.0])


def test_two_regime_fit(rng):
    x = np.r_[rng.normal(0, 1, 60), rng.normal(5, 3, 60)]
    m = fit_two_regime_gaussian(x)
    assert m.pre.mean == pytest.approx(0, abs=0.5) and m.post.mean == pytest.approx(5, abs=1.0)
    assert m.post.sd > m.pre.sd


def test_stations_csv(tmp_path):
    st = synthetic_event((-41.0, 174.0), [(-41.2, 174.1), (-40.8, 173.9)], seed=1)
    write_stations_csv(tmp_path / "s.csv", st)
    back = load_stations_csv(tmp_path / "s.csv")
    assert [s.id for s in back] == [s.id for s in st]
    assert all(np.array_equal(a.series, b.series) for a, b in zip(st, back))
    (tmp_path / "bad.csv").write_text("s0,91,0,1,2\n")
    with pytest.raises(ParseError, match="row 1"):
        load_stations_csv(tmp_path / "bad.csv")


def surrounding_layout(center, rng, n=12):
    bearings = (np.arange(n) * 360 / n + rng.uniform(-15, 15, n)) % 360
    return [destination(*center, b, d) for b, d in zip(bearings, rng.uniform(20, 150, n))]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_planted_epicenter(seed):
    rng = np.random.default_rng(seed)
    center = (-41.5 + rng.uniform(-1, 1), 174.0 + rng.uniform(-1, 1))
    stations = synthetic_event(center, surrounding_layout(center, rng), seed=seed)
    res = locate_epicenter(stations, 13.0, 10.0, config=McmcConfig(2000, 500, 5, seed))
    assert haversine(res.lat, res.lon, *center) < 30.0
