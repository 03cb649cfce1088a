"""Radial distribution feeder model.

Feeders are balanced single-phase equivalents held in per-unit. Files use
physical units (kW, kvar, ohm, mile) and are converted on load.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

NODE_KINDS = ("residential", "industrial", "station-host", "slack")

# 2*pi*60 Hz * 2e-7 H/m * 1609.344 m/mile, ohm/mile
CARSON_COEFF_60HZ = 0.12134


class FeederError(ValueError):
    """Raised for malformed feeder files or invalid feeder data."""


class TopologyError(FeederError):
    """Raised when a branch set is not a tree rooted at the slack node."""


@dataclass(frozen=True)
class Node:
    id: int
    base_load_p: float = 0.0  # kW
    base_load_q: float = 0.0  # kvar
    kind: str = "residential"

    def __post_init__(self) -> None:
        if self.kind not in NODE_KINDS:
            raise FeederError(f"node {self.id}: unknown kind {self.kind!r}")
        if self.kind != "slack" and (self.base_load_p < 0 or self.base_load_q < 0):
            raise FeederError(f"node {self.id}: base loads must be >= 0")


@dataclass(frozen=True)
class Branch:
    from_node: int
    to_node: int
    impedance: complex  # per-unit

    def __post_init__(self) -> None:
        if self.impedance.real < 0:
            raise FeederError(
                f"branch {self.from_node}-{self.to_node}: negative resistance"
            )


@dataclass(frozen=True)
class ConductorSpec:
    """Overhead conductor data for a balanced positive-sequence line.

    Attributes:
        resistance: ohm/mile.
        diameter: inch. Carried for completeness; the reactance uses ``gmr``.
        gmr: geometric mean radius, ft.
        equivalent_spacing: geometric mean phase spacing, ft.
        length: mile.
    """

    resistance: float
    diameter: float
    gmr: float
    equivalent_spacing: float
    length: float = 1.0


def positive_sequence_impedance(spec: ConductorSpec) -> complex:
    """Series impedance of a line segment in ohms.

    Uses the modified-Carson positive-sequence reactance at 60 Hz,
    ``x = 0.12134 * (ln(1/gmr) + ln(Deq))`` ohm/mile.
    """
    if spec.gmr <= 0 or spec.equivalent_spacing <= 0:
        raise FeederError("gmr and equivalent_spacing must be positive")
    if spec.resistance <= 0 or spec.diameter <= 0:
        raise FeederError("resistance and diameter must be positive")
    if spec.length < 0:
        raise FeederError("length must be non-negative")
    x_per_mile = CARSON_COEFF_60HZ * (
        math.log(1.0 / spec.gmr) + math.log(spec.equivalent_spacing)
    )
    return complex(spec.resistance * spec.length, x_per_mile * spec.length)


def impedance_base(s_kva: float, v_kv: float) -> float:
    """Impedance base in ohms for a three-phase kVA and line-to-line kV base."""
    return v_kv * v_kv * 1000.0 / s_kva


def ohm_to_pu(z_ohm: complex, s_kva: float, v_kv: float) -> complex:
    return z_ohm / impedance_base(s_kva, v_kv)


def pu_to_ohm(z_pu: complex, s_kva: float, v_kv: float) -> complex:
    return z_pu * impedance_base(s_kva, v_kv)


@dataclass(frozen=True)
class TopologyReport:
    """Parent map and a parent-before-child ordering of node ids."""

    parent: dict[int, int]
    order: list[int]
    depth: dict[int, int] = field(default_factory=dict)


def validate_radial(feeder: Feeder) -> TopologyReport:
    """Check that the branches form a spanning tree rooted at the slack.

    Branch direction in the data is not trusted; the tree is oriented by a
    breadth-first walk from the slack node.

    Raises:
        TopologyError: on self-loops, cycles (including a node reached from
            two parents), or nodes unreachable from the slack.
    """
    ids = {n.id for n in feeder.nodes}
    slack = feeder.slack_id
    adjacency: dict[int, list[int]] = {i: [] for i in ids}
    seen_pairs: set[frozenset[int]] = set()
    for br in feeder.branches:
        a, b = br.from_node, br.to_node
        if a == b:
            raise TopologyError(f"cycle: self-loop on node {a}")
        if a not in ids or b not in ids:
            raise TopologyError(f"branch {a}-{b} references an unknown node")
        pair = frozenset((a, b))
        if pair in seen_pairs:
            raise TopologyError(f"cycle: parallel branches between {a} and {b}")
        seen_pairs.add(pair)
        adjacency[a].append(b)
        adjacency[b].append(a)

    parent: dict[int, int] = {}
    depth = {slack: 0}
    order = [slack]
    queue = deque([slack])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if v == parent.get(u):
                continue
            if v in depth:
                raise TopologyError(
                    f"cycle: node {v} has multiple parents (loop closed by branch {u}-{v})"
                )
            parent[v] = u
            depth[v] = depth[u] + 1
            order.append(v)
            queue.append(v)

    missing = ids - set(depth)
    if missing:
        raise TopologyError(f"unreachable from slack: {sorted(missing)}")
    return TopologyReport(parent=parent, order=order, depth=depth)


@dataclass(frozen=True, eq=False)
class Feeder:
    """Immutable radial feeder in per-unit.

    ``nodes`` may carry arbitrary integer labels; :attr:`index` maps them to
    dense positions used by the solvers.
    """

    nodes: tuple[Node, ...]
    branches: tuple[Branch, ...]
    slack_voltage: complex = 1.0 + 0.0j
    s_base: float = 1000.0  # kVA
    v_base: float = 12.47  # kV line-to-line
    name: str = ""

    def __post_init__(self) -> None:
        slacks = [n.id for n in self.nodes if n.kind == "slack"]
        if len(slacks) != 1:
            raise FeederError(f"expected exactly one slack node, found {len(slacks)}")
        if len({n.id for n in self.nodes}) != len(self.nodes):
            raise FeederError("duplicate node ids")
        if self.s_base <= 0 or self.v_base <= 0:
            raise FeederError("bases must be positive")
        # raises on any topology problem; cached for later use
        self.topology

    @property
    def slack_id(self) -> int:
        return next(n.id for n in self.nodes if n.kind == "slack")

    @cached_property
    def index(self) -> dict[int, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def topology(self) -> TopologyReport:
        return validate_radial(self)

    @property
    def node_ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    def node(self, node_id: int) -> Node:
        return self.nodes[self.index[node_id]]

    @cached_property
    def branch_to(self) -> dict[int, Branch]:
        """Branch feeding each non-slack node, keyed by child id."""
        parent = self.topology.parent
        out = {}
        for br in self.branches:
            child = br.to_node if parent.get(br.to_node) == br.from_node else br.from_node
            out[child] = br
        return out

    def base_injections(self) -> tuple[list[float], list[float]]:
        """Base loads (kW, kvar) in node order."""
        return [n.base_load_p for n in self.nodes], [n.base_load_q for n in self.nodes]


def _require(obj: dict, key: str, where: str) -> Any:
    if key not in obj:
        raise FeederError(f"{where}: missing field {key!r}")
    return obj[key]


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FeederError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise FeederError(f"{where}: non-finite value")
    return float(value)


def feeder_from_dict(data: dict, name: str = "") -> Feeder:
    """Build a :class:`Feeder` from the parsed JSON document."""
    bases = _require(data, "bases", "feeder")
    s_kva = _number(_require(bases, "s_kva", "bases"), "bases.s_kva")
    v_kv = _number(_require(bases, "v_kv", "bases"), "bases.v_kv")
    slack_v = bases.get("slack_v_pu", 1.0)
    if isinstance(slack_v, list):
        slack_voltage = complex(
            _number(slack_v[0], "bases.slack_v_pu[0]"),
            _number(slack_v[1], "bases.slack_v_pu[1]"),
        )
    else:
        slack_voltage = complex(_number(slack_v, "bases.slack_v_pu"), 0.0)

    nodes = []
    for k, raw in enumerate(_require(data, "nodes", "feeder")):
        where = f"nodes[{k}]"
        node_id = _require(raw, "id", where)
        if isinstance(node_id, bool) or not isinstance(node_id, int) or node_id < 0:
            raise FeederError(f"{where}.id: expected a non-negative integer")
        nodes.append(
            Node(
                id=node_id,
                base_load_p=_number(raw.get("p_kw", 0.0), f"{where}.p_kw"),
                base_load_q=_number(raw.get("q_kvar", 0.0), f"{where}.q_kvar"),
                kind=raw.get("kind", "residential"),
            )
        )

    branches = []
    for k, raw in enumerate(_require(data, "branches", "feeder")):
        where = f"branches[{k}]"
        a = _require(raw, "from", where)
        b = _require(raw, "to", where)
        if "conductor" in raw:
            c = raw["conductor"]
            spec = ConductorSpec(
                resistance=_number(_require(c, "resistance", where), f"{where}.conductor.resistance"),
                diameter=_number(c.get("diameter", 1.0), f"{where}.conductor.diameter"),
                gmr=_number(_require(c, "gmr", where), f"{where}.conductor.gmr"),
                equivalent_spacing=_number(
                    _require(c, "equivalent_spacing", where),
                    f"{where}.conductor.equivalent_spacing",
                ),
                length=_number(_require(raw, "length_mi", where), f"{where}.length_mi"),
            )
            z_ohm = positive_sequence_impedance(spec)
        else:
            z_ohm = complex(
                _number(_require(raw, "r_ohm", where), f"{where}.r_ohm"),
                _number(_require(raw, "x_ohm", where), f"{where}.x_ohm"),
            )
        branches.append(Branch(a, b, ohm_to_pu(z_ohm, s_kva, v_kv)))

    return Feeder(
        nodes=tuple(nodes),
        branches=tuple(branches),
        slack_voltage=slack_voltage,
        s_base=s_kva,
        v_base=v_kv,
        name=name,
    )


def load_feeder(path: str | Path) -> Feeder:
    """Load and validate a feeder JSON file.

    Raises:
        FeederError: with the offending line (JSON syntax) or field path.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FeederError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FeederError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise FeederError(f"{path}: top level must be an object")
    try:
        return feeder_from_dict(data, name=data.get("name", path.stem))
    except FeederError as exc:
        raise type(exc)(f"{path}: {exc}") from exc
    except (TypeError, AttributeError) as exc:
        raise FeederError(f"{path}: malformed structure ({exc})") from exc
