from __future__ import annotations

import heapq
import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdpf.uncertainty import (
    AvailabilityModel,
    LoadUncertainty,
    PhevStationModel,
    ScenarioError,
    UnstableQueueWarning,
    build_samples,
    draw_inputs,
    injections_from_inputs,
    input_variables,
    load_scenario,
    sample_availability,
    sample_load,
    sample_recharge_energy,
    sample_station_demand,
    scenario_from_dict,
)

LEVEL1 = dict(level=1, charger_voltage=120, charger_current=16, battery_capacity_mean=12.0,
              battery_capacity_std=2.0, mileage_mu=3.37, mileage_sigma=0.5,
              energy_per_mile=0.3, energy_per_mile_slope=0.01)


def simulate_queue(arrival_rate, service_rate, servers, arrivals, rng):
    """Event-driven multi-server FIFO queue; time-average number in service."""
    t = 0.0
    busy = 0
    waiting = 0
    departures: list[float] = []
    area = 0.0
    next_arrival = rng.exponential(1 / arrival_rate)
    served = 0
    while served < arrivals:
        if departures and departures[0] <= next_arrival:
            t_next = heapq.heappop(departures)
            area += busy * (t_next - t)
            t = t_next
            if waiting:
                waiting -= 1
                heapq.heappush(departures, t + rng.exponential(1 / service_rate))
            else:
                busy -= 1
        else:
            area += busy * (next_arrival - t)
            t = next_arrival
            served += 1
            if busy < servers:
                busy += 1
                heapq.heappush(departures, t + rng.exponential(1 / service_rate))
            else:
                waiting += 1
            next_arrival = t + rng.exponential(1 / arrival_rate)
    return area / t


def test_sample_load_examples():
    m = LoadUncertainty(1, 100.0, 40.0, 0.05)
    assert sample_load(m, 1.0) == pytest.approx((105.0, 42.0))
    assert sample_load(LoadUncertainty(1, 100.0, 40.0, 0.0), 3.7) == (100.0, 40.0)
    assert sample_load(LoadUncertainty(1, 100.0, 40.0, 0.5), -4.0) == (0.0, 0.0)


def test_sample_load_std_fraction():
    z = np.random.default_rng(0).standard_normal(1_000_000)
    p, _ = sample_load(LoadUncertainty(1, 100.0, 40.0, 0.05), z)
    assert 0.049 <= p.std() / p.mean() <= 0.051


def test_availability_frequency():
    on = sample_availability(AvailabilityModel(15, 0.45), np.random.default_rng(1), 1_000_000)
    assert abs(on.mean() - 0.45) <= 0.002


def test_availability_moments():
    mean, sd, skew = AvailabilityModel(1, 0.45).moments()
    assert mean == 0.45
    assert sd == pytest.approx(math.sqrt(0.45 * 0.55))
    assert skew == pytest.approx(0.1 / math.sqrt(0.2475))


def test_station_mean_demand_matches_queue_simulation():
    station = PhevStationModel(node=1, chargers=1, arrival_rate=0.1, **LEVEL1)
    mu = station.service_rate
    demand = sample_station_demand(station, np.random.default_rng(2), 1_000_000)
    busy = simulate_queue(0.1, mu, 1, 300_000, np.random.default_rng(3))
    assert station.charger_power == pytest.approx(1.92)
    assert demand.mean() == pytest.approx(busy * 1.92, rel=0.01)


def test_multi_server_occupancy_matches_simulation():
    station = PhevStationModel(node=1, chargers=3, arrival_rate=0.4, **LEVEL1)
    pmf = station.occupancy_pmf
    mean_busy = float(pmf @ np.arange(4))
    busy = simulate_queue(0.4, station.service_rate, 3, 300_000, np.random.default_rng(4))
    assert mean_busy == pytest.approx(busy, rel=0.01)


def test_occupancy_pmf_properties():
    for lam in (0.0, 0.05, 0.3):
        pmf = PhevStationModel(node=1, chargers=2, arrival_rate=lam, **LEVEL1).occupancy_pmf
        assert pmf.sum() == pytest.approx(1.0)
        assert np.all(pmf >= 0)
    idle = PhevStationModel(node=1, chargers=2, arrival_rate=0.0, **LEVEL1)
    assert sample_station_demand(idle, np.random.default_rng(0)) == 0.0


def test_unstable_queue_warns_and_saturates():
    st_ = PhevStationModel(node=1, chargers=1, arrival_rate=50.0, **LEVEL1)
    with pytest.warns(UnstableQueueWarning):
        pmf = st_.occupancy_pmf
    assert pmf[-1] == 1.0


def test_recharge_energy_bounds():
    st_ = PhevStationModel(node=1, chargers=1, arrival_rate=0.1, **LEVEL1)
    e = sample_recharge_energy(st_, np.random.default_rng(5), 100_000)
    assert np.all(e >= 0)
    # a vehicle cannot take more than its pack
    assert st_.recharge_energy(1e6, 10.0) == pytest.approx(10.0)
    assert st_.recharge_energy(0.0, 10.0) == 0.0
    assert e.mean() == pytest.approx(st_.mean_recharge_energy, rel=0.01)


def test_fixed_range_soc():
    st_ = PhevStationModel(node=1, chargers=1, arrival_rate=0.1, all_electric_range=40.0,
                           **{k: v for k, v in LEVEL1.items()})
    # 10 miles of a 40 mile range uses a quarter of the pack
    assert st_.recharge_energy(10.0, 12.0) == pytest.approx(3.0)


def test_station_validation():
    with pytest.raises(ScenarioError):
        PhevStationModel(node=1, chargers=0, arrival_rate=0.1, **LEVEL1)
    with pytest.raises(ScenarioError):
        AvailabilityModel(1, 1.2)


def test_build_samples_shape(scenario34):
    sm = build_samples(scenario34, 45, 2016)
    assert sm.k_n == 45
    assert sm.p.shape == (45, 34)
    assert set(np.unique(sm.column("AVAIL:15:station"))) <= {0.0, 1.0}
    with pytest.raises(ScenarioError):
        build_samples(scenario34, 1, 0)


def test_availability_gates_station_demand(scenario34):
    sm = build_samples(scenario34, 2000, 9)
    ev = sm.column("EV:15")
    off = sm.column("AVAIL:15:station") == 0
    assert off.any() and np.all(ev[off] == 0)


def test_column_means_clt(scenario34):
    k = 100_000
    x = draw_inputs(scenario34, np.arange(k), scenario34.seed)
    for j, var in enumerate(input_variables(scenario34)):
        assert abs(x[:, j].mean() - var.mean) <= 3 * var.std / math.sqrt(k) + 1e-12, var.label


def test_column_mean_z_scores_are_standard(scenario34):
    # across many seeds the standardized column means should look N(0, 1)
    k = 20_000
    variables = input_variables(scenario34)
    z = []
    for seed in range(30):
        x = draw_inputs(scenario34, np.arange(k), seed)
        z += [(x[:, j].mean() - v.mean) / (v.std / math.sqrt(k)) for j, v in enumerate(variables)]
    z = np.array(z)
    assert abs(z.mean()) < 0.15
    assert 0.9 < z.std() < 1.1


def test_rows_are_order_independent(scenario34):
    a = build_samples(scenario34, 50, 4)
    b = build_samples(scenario34, 30, 4, start_row=20)
    assert np.array_equal(a.values[20:], b.values)
    rev = draw_inputs(scenario34, np.arange(50)[::-1], 4)[::-1]
    assert np.array_equal(draw_inputs(scenario34, np.arange(50), 4), rev)


def test_injections_are_linear_in_inputs(scenario34):
    variables = input_variables(scenario34)
    mean = np.array([v.mean for v in variables])
    p0, _ = injections_from_inputs(scenario34, mean)
    step = np.zeros_like(mean)
    step[0] = 0.1
    p1, _ = injections_from_inputs(scenario34, mean + step)
    p2, _ = injections_from_inputs(scenario34, mean + 2 * step)
    assert np.allclose(p2 - p1, p1 - p0)


def test_scenario123_inputs(scenario123):
    labels = [v.label for v in input_variables(scenario123)]
    assert "AVAIL:34:load" in labels
    assert sum(lab.startswith("EV:") for lab in labels) == 6
    sm = build_samples(scenario123, 400, 1)
    off = sm.column("AVAIL:34:load") == 0
    assert np.all(sm.column("P:34")[off] == 0)


def test_scenario_rejects_unknown_node():
    from pdpf.uncertainty import resolve_data_path

    doc = json.loads(resolve_data_path("scenario34").read_text())
    doc["outputs"] = [999]
    with pytest.raises(ScenarioError):
        scenario_from_dict(doc, resolve_data_path("scenario34").parent)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(0, 2**31))
def test_availability_draws_are_binary(p, seed):
    on = sample_availability(AvailabilityModel(1, p), np.random.default_rng(seed), 1000)
    assert set(np.unique(on)) <= {0, 1}
    if p == 0:
        assert on.sum() == 0
    if p == 1:
        assert on.sum() == 1000


def test_load_scenario_by_name_and_path():
    from pdpf.uncertainty import resolve_data_path

    a = load_scenario("scenario34")
    b = load_scenario(resolve_data_path("scenario34"))
    assert a.k_n == b.k_n == 45
    assert a.seed == 2016
    assert a.outputs == (5, 15, 28)
