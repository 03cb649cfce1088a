from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_radial, two_bus, two_bus_voltage
from pdpf.feeder import load_feeder
from pdpf.solver import SolverConfig, branch_losses, slack_injection, solve_fbs, solve_reference
from pdpf.uncertainty import resolve_data_path


@pytest.fixture(scope="module", params=["feeder34", "feeder123"])
def bundled(request):
    return load_feeder(resolve_data_path(request.param))


def test_zero_load_gives_flat_profile(bundled):
    n = len(bundled.nodes)
    sol = solve_fbs(bundled, np.zeros(n), np.zeros(n))
    assert sol.converged
    assert np.allclose(sol.voltages, bundled.slack_voltage, atol=1e-14)
    assert sol.iterations <= 2


def test_base_case_matches_reference(bundled):
    p, q = bundled.base_injections()
    a = solve_fbs(bundled, p, q)
    b = solve_reference(bundled, p, q)
    assert a.converged and b.converged
    assert np.max(np.abs(a.voltages - b.voltages)) < 1e-8
    assert 0.9 < a.magnitudes.min() < 1.0


def test_power_balance(bundled):
    p, q = bundled.base_injections()
    sol = solve_fbs(bundled, p, q, SolverConfig(tolerance=1e-12))
    load = complex(sum(p), sum(q)) / bundled.s_base
    assert slack_injection(bundled, sol) == pytest.approx(load + branch_losses(bundled, sol), abs=1e-9)


@pytest.mark.parametrize("z,p,q,v0", [
    (0.02 + 0.04j, 400.0, 200.0, 1.0),
    (0.10 + 0.05j, 1500.0, 300.0, 1.0),
    (0.001 + 0.003j, 50.0, -20.0, 1.02),
    (0.05 + 0.05j, 0.0, 0.0, 1.0),
    (0.03 + 0.01j, 800.0, 0.0, 1.05 * np.exp(0.1j)),
])
def test_two_bus_closed_form(z, p, q, v0):
    f = two_bus(z, 0.0, 0.0, v0=v0)
    sol = solve_fbs(f, [0, p], [0, q], SolverConfig(tolerance=1e-12))
    assert sol.converged
    assert abs(sol.voltages[1] - two_bus_voltage(z, complex(p, q) / 1000, v0)) < 1e-8


def test_collapse_is_reported():
    f = two_bus(0.2 + 0.4j, 1000.0, 0.0)
    sol = solve_fbs(f, [0, 5000.0], [0, 3000.0])
    assert not sol.converged
    assert sol.status in ("collapse", "max_iterations")


def test_iteration_cap_is_reported():
    f = two_bus(0.05 + 0.1j, 0, 0)
    sol = solve_fbs(f, [0, 1500.0], [0, 500.0], SolverConfig(max_iterations=2, tolerance=1e-14))
    assert sol.status == "max_iterations"
    assert not sol.converged


def test_length_mismatch_raises():
    f = two_bus(0.01j, 0, 0)
    with pytest.raises(ValueError):
        solve_fbs(f, [0, 1, 2], [0, 0, 0])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 200), st.integers(0, 2**31))
def test_fbs_matches_reference_on_random_trees(n, seed):
    f = random_radial(np.random.default_rng(seed), n)
    p, q = f.base_injections()
    a = solve_fbs(f, p, q)
    b = solve_reference(f, p, q)
    assert a.converged and b.converged
    assert np.max(np.abs(a.voltages - b.voltages)) < 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(1.05, 2.0))
def test_more_load_never_raises_voltage(seed, factor):
    f = random_radial(np.random.default_rng(seed), 30)
    p, q = (np.array(v) for v in f.base_injections())
    lo = solve_fbs(f, p, q).magnitudes
    hi = solve_fbs(f, p * factor, q * factor).magnitudes
    assert np.all(hi <= lo + 1e-12)


def test_node_order_does_not_change_solution():
    rng = np.random.default_rng(5)
    f = random_radial(rng, 40)
    p, q = f.base_injections()
    sol = solve_fbs(f, p, q)
    from pdpf.feeder import Feeder

    perm = rng.permutation(len(f.nodes))
    g = Feeder(tuple(f.nodes[i] for i in perm), f.branches[::-1])
    pg, qg = g.base_injections()
    sol_g = solve_fbs(g, pg, qg)
    by_id = dict(zip(f.node_ids, sol.voltages))
    assert all(abs(by_id[n] - v) < 1e-12 for n, v in zip(g.node_ids, sol_g.voltages))
