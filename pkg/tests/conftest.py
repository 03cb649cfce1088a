from __future__ import annotations

import numpy as np
import pytest

from pdpf.feeder import Branch, Feeder, Node

ACCEPTANCE_LINES: list[str] = []


def two_bus(z_pu: complex, p_kw: float, q_kvar: float, v0: complex = 1.0, s_base: float = 1000.0) -> Feeder:
    nodes = (Node(0, 0.0, 0.0, "slack"), Node(1, p_kw, q_kvar))
    return Feeder(nodes, (Branch(0, 1, z_pu),), slack_voltage=v0, s_base=s_base)


def two_bus_voltage(z_pu: complex, s_pu: complex, v0: complex = 1.0) -> complex:
    """Closed-form load-bus voltage of a single line feeding a constant-power load."""
    r, x = z_pu.real, z_pu.imag
    b = abs(v0) ** 2 - 2 * (r * s_pu.real + x * s_pu.imag)
    vmag2 = (b + np.sqrt(b * b - 4 * abs(z_pu) ** 2 * abs(s_pu) ** 2)) / 2
    return np.conj((vmag2 + z_pu * np.conj(s_pu)) / v0)


def random_radial(rng: np.random.Generator, n_nodes: int, max_load_kw: float = 30.0) -> Feeder:
    """Random tree rooted at node 0 with shuffled labels and branch directions."""
    labels = rng.permutation(np.arange(1000, 1000 + n_nodes)).tolist()
    nodes = [Node(labels[0], 0.0, 0.0, "slack")]
    branches = []
    for k in range(1, n_nodes):
        parent = labels[int(rng.integers(0, k))]
        z = complex(rng.uniform(5e-4, 4e-3), rng.uniform(5e-4, 4e-3))
        a, b = (parent, labels[k]) if rng.random() < 0.7 else (labels[k], parent)
        branches.append(Branch(a, b, z))
        p = rng.uniform(0, max_load_kw)
        nodes.append(Node(labels[k], p, p * rng.uniform(0.2, 0.6)))
    order = rng.permutation(len(nodes))
    return Feeder(tuple(nodes[i] for i in order), tuple(branches))


@pytest.fixture(scope="session")
def scenario34():
    from pdpf.uncertainty import load_scenario

    return load_scenario("scenario34")


@pytest.fixture(scope="session")
def scenario123():
    from pdpf.uncertainty import load_scenario

    return load_scenario("scenario123")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
