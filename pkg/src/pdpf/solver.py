"""Deterministic distribution power flow for one realization of the loads.

Two solvers share one contract: :func:`solve_fbs` is the forward/backward
sweep used by every engine, :func:`solve_reference` iterates on the nodal
admittance matrix and exists as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .feeder import Feeder


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-8  # p.u. voltage, infinity norm of the update
    max_iterations: int = 100
    collapse_floor: float = 0.5  # p.u.
    load_model: str = "constant-power"

    def __post_init__(self) -> None:
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.load_model != "constant-power":
            raise ValueError(f"unsupported load model {self.load_model!r}")


@dataclass(frozen=True)
class VoltageSolution:
    """Node voltages and branch flows in per-unit, in feeder node order.

    ``branch_flow[k]`` is the complex power leaving the parent of node ``k``
    towards ``k`` (zero for the slack). ``status`` is one of
    ``"converged"``, ``"max_iterations"`` or ``"collapse"``.
    """

    voltages: np.ndarray
    branch_current: np.ndarray
    branch_flow: np.ndarray
    iterations: int
    converged: bool
    status: str

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.voltages)


@lru_cache(maxsize=32)
def _sweep_plan(feeder: Feeder):
    idx = feeder.index
    topo = feeder.topology
    order = [idx[i] for i in topo.order]
    parent = [-1] * len(feeder.nodes)
    z = [0j] * len(feeder.nodes)
    for child_id, br in feeder.branch_to.items():
        k = idx[child_id]
        parent[k] = idx[topo.parent[child_id]]
        z[k] = br.impedance
    return order, parent, z


def _as_pu(feeder: Feeder, p_kw, q_kvar) -> list[complex]:
    p = np.asarray(p_kw, dtype=float)
    q = np.asarray(q_kvar, dtype=float)
    n = len(feeder.nodes)
    if p.shape != (n,) or q.shape != (n,):
        raise ValueError(f"injection vectors must have length {n}")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
        raise ValueError("injections must be finite")
    s = (p + 1j * q) / feeder.s_base
    s[feeder.index[feeder.slack_id]] = 0.0
    return s.tolist()


def solve_fbs(feeder: Feeder, p_kw, q_kvar, cfg: SolverConfig | None = None) -> VoltageSolution:
    """Forward/backward sweep with constant-power loads.

    Args:
        feeder: validated radial feeder.
        p_kw, q_kvar: load per node in feeder node order (consumption
            positive). The slack entry is ignored.
    """
    cfg = cfg or SolverConfig()
    order, parent, z = _sweep_plan(feeder)
    s = _as_pu(feeder, p_kw, q_kvar)
    root = order[0]
    downstream = order[1:]
    upstream = downstream[::-1]
    v = [feeder.slack_voltage] * len(s)
    status = "max_iterations"
    it = 0
    while it < cfg.max_iterations:
        it += 1
        j = [(sk / vk).conjugate() for sk, vk in zip(s, v)]
        for k in upstream:
            j[parent[k]] += j[k]
        dv = 0.0
        for k in downstream:
            new = v[parent[k]] - z[k] * j[k]
            d = abs(new - v[k])
            if d > dv:
                dv = d
            v[k] = new
        if min(abs(x) for x in v) < cfg.collapse_floor:
            status = "collapse"
            break
        if dv < cfg.tolerance:
            status = "converged"
            break

    # currents consistent with the final voltages
    j = [(sk / vk).conjugate() for sk, vk in zip(s, v)]
    for k in upstream:
        j[parent[k]] += j[k]
    j[root] = 0j
    volts = np.array(v)
    cur = np.array(j)
    flow = np.zeros(len(v), dtype=complex)
    par = np.array(parent)
    mask = par >= 0
    flow[mask] = volts[par[mask]] * np.conj(cur[mask])
    return VoltageSolution(volts, cur, flow, it, status == "converged", status)


@lru_cache(maxsize=32)
def _admittance_plan(feeder: Feeder):
    n = len(feeder.nodes)
    y = np.zeros((n, n), dtype=complex)
    idx = feeder.index
    for br in feeder.branches:
        a, b = idx[br.from_node], idx[br.to_node]
        ys = 1.0 / br.impedance
        y[a, a] += ys
        y[b, b] += ys
        y[a, b] -= ys
        y[b, a] -= ys
    root = idx[feeder.slack_id]
    keep = np.array([k for k in range(n) if k != root])
    lu = scipy.linalg.lu_factor(y[np.ix_(keep, keep)])
    return keep, lu, y[keep, root]


def solve_reference(feeder: Feeder, p_kw, q_kvar, cfg: SolverConfig | None = None) -> VoltageSolution:
    """Fixed-point iteration on the nodal admittance system.

    Each iteration converts the constant-power loads to current injections at
    the present voltages and solves ``Y_LL V_L = -I_L - Y_L0 V_0`` densely.
    """
    cfg = cfg or SolverConfig()
    keep, lu, y_l0 = _admittance_plan(feeder)
    s = np.array(_as_pu(feeder, p_kw, q_kvar))
    n = len(s)
    root = feeder.index[feeder.slack_id]
    v0 = feeder.slack_voltage
    v = np.full(n, v0, dtype=complex)
    status = "max_iterations"
    it = 0
    while it < cfg.max_iterations:
        it += 1
        i_load = np.conj(s[keep] / v[keep])
        new = scipy.linalg.lu_solve(lu, -i_load - y_l0 * v0)
        dv = np.max(np.abs(new - v[keep]))
        v[keep] = new
        if np.min(np.abs(v)) < cfg.collapse_floor:
            status = "collapse"
            break
        if dv < cfg.tolerance:
            status = "converged"
            break

    # branch quantities from the converged voltages
    cur = np.zeros(n, dtype=complex)
    flow = np.zeros(n, dtype=complex)
    idx = feeder.index
    parent = feeder.topology.parent
    for child_id, br in feeder.branch_to.items():
        k = idx[child_id]
        p = idx[parent[child_id]]
        cur[k] = (v[p] - v[k]) / br.impedance
        flow[k] = v[p] * np.conj(cur[k])
    cur[root] = 0j
    return VoltageSolution(v, cur, flow, it, status == "converged", status)


def slack_injection(feeder: Feeder, sol: VoltageSolution) -> complex:
    """Complex power delivered by the slack node, per-unit."""
    idx = feeder.index
    slack = feeder.slack_id
    total = 0j
    for child_id, parent_id in feeder.topology.parent.items():
        if parent_id == slack:
            total += sol.branch_flow[idx[child_id]]
    return total


def branch_losses(feeder: Feeder, sol: VoltageSolution) -> complex:
    """Sum of |I|^2 Z over all branches, per-unit."""
    idx = feeder.index
    return sum(
        abs(sol.branch_current[idx[c]]) ** 2 * br.impedance
        for c, br in feeder.branch_to.items()
    )
