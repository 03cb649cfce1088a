"""Stochastic inputs: residential loads, availability, and PHEV stations.

Primitive random variables are

* ``LOAD:<node>``  load multiplier, normal with mean 1 (shared by P and Q
  unless P/Q are drawn independently, in which case ``LOADQ:<node>`` exists),
* ``EV:<node>``    station demand in kW before availability,
* ``AVAIL:<node>`` Bernoulli availability state.

:func:`build_samples` realises them through counter-based streams and maps
them to per-node P/Q columns; the point-estimate engines use
:func:`input_variables` and :func:`injections_from_inputs` on the same map.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import stats

from . import rng
from .feeder import Feeder, load_feeder

DATA_DIR = Path(__file__).resolve().parent / "data"


class ScenarioError(ValueError):
    pass


class UnstableQueueWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class LoadUncertainty:
    node: int
    mean_p: float  # kW
    mean_q: float  # kvar
    std_fraction: float = 0.05

    def __post_init__(self) -> None:
        if self.std_fraction < 0:
            raise ScenarioError(f"node {self.node}: std_fraction must be >= 0")
        if self.mean_p < 0 or self.mean_q < 0:
            raise ScenarioError(f"node {self.node}: mean loads must be >= 0")


@dataclass(frozen=True)
class AvailabilityModel:
    """Bernoulli on/off state gating a station or the node's own load."""

    node: int
    probability_on: float
    target: str = "station"  # or "load"

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability_on <= 1.0:
            raise ScenarioError(f"node {self.node}: probability_on outside [0, 1]")
        if self.target not in ("station", "load"):
            raise ScenarioError(f"node {self.node}: unknown availability target {self.target!r}")

    def moments(self) -> tuple[float, float, float]:
        p = self.probability_on
        sd = math.sqrt(p * (1 - p))
        skew = (1 - 2 * p) / sd if sd > 0 else 0.0
        return p, sd, skew


@dataclass(frozen=True)
class PhevStationModel:
    """Charging station with ``chargers`` identical servers.

    Per-vehicle recharge energy is ``capacity * (1 - SOC)`` with
    ``SOC = max(0, 1 - miles / AER)`` and lognormal daily miles. When
    ``all_electric_range`` is omitted each vehicle's range is
    ``capacity / energy_per_mile(capacity)``, where energy per mile is linked
    to capacity through ``energy_per_mile_slope`` (larger packs, heavier cars).
    Occupancy is the M/M/c steady state with service rate
    ``charger_power * efficiency / E[recharge energy]``.
    """

    node: int
    level: int
    charger_voltage: float  # V
    charger_current: float  # A
    chargers: int
    arrival_rate: float  # vehicles / hour
    battery_capacity_mean: float  # kWh
    battery_capacity_std: float  # kWh
    mileage_mu: float  # mean of ln(miles)
    mileage_sigma: float  # std of ln(miles)
    energy_per_mile: float = 0.3  # kWh / mile at mean capacity
    energy_per_mile_slope: float = 0.0  # kWh / mile per kWh of capacity
    all_electric_range: float | None = None  # miles
    charger_efficiency: float = 0.9

    def __post_init__(self) -> None:
        if self.level not in (1, 2, 3):
            raise ScenarioError(f"station {self.node}: level must be 1, 2 or 3")
        if self.chargers < 1:
            raise ScenarioError(f"station {self.node}: chargers must be >= 1")
        if self.arrival_rate < 0:
            raise ScenarioError(f"station {self.node}: arrival_rate must be >= 0")
        if self.mileage_sigma <= 0:
            raise ScenarioError(f"station {self.node}: mileage_sigma must be > 0")
        if not 0 < self.charger_efficiency <= 1:
            raise ScenarioError(f"station {self.node}: charger_efficiency outside (0, 1]")
        if self.battery_capacity_mean <= 0 or self.battery_capacity_std < 0:
            raise ScenarioError(f"station {self.node}: invalid battery capacity distribution")
        if self.energy_per_mile <= 0:
            raise ScenarioError(f"station {self.node}: energy_per_mile must be > 0")
        if self.all_electric_range is not None and self.all_electric_range <= 0:
            raise ScenarioError(f"station {self.node}: all_electric_range must be > 0")

    @property
    def charger_power(self) -> float:
        """Power drawn by one busy charger, kW."""
        return self.charger_voltage * self.charger_current * 1e-3

    def capacity_distribution(self):
        mu, sd = self.battery_capacity_mean, self.battery_capacity_std
        if sd == 0:
            return None
        return stats.truncnorm((0.0 - mu) / sd, np.inf, loc=mu, scale=sd)

    def range_of(self, capacity) -> np.ndarray:
        capacity = np.asarray(capacity, dtype=float)
        if self.all_electric_range is not None:
            return np.full_like(capacity, self.all_electric_range)
        epm = self.energy_per_mile + self.energy_per_mile_slope * (
            capacity - self.battery_capacity_mean
        )
        return capacity / np.maximum(epm, 1e-3 * self.energy_per_mile)

    def recharge_energy(self, miles, capacity) -> np.ndarray:
        """Battery-side recharge energy (kWh) for given miles and capacities."""
        miles = np.asarray(miles, dtype=float)
        capacity = np.asarray(capacity, dtype=float)
        soc = np.maximum(0.0, 1.0 - miles / self.range_of(capacity))
        return capacity * (1.0 - soc)

    @cached_property
    def mean_recharge_energy(self) -> float:
        """E[recharge energy] by a midpoint rule in probability space."""
        n_miles, n_cap = 2000, 200
        u = (np.arange(n_miles) + 0.5) / n_miles
        miles = np.exp(self.mileage_mu + self.mileage_sigma * stats.norm.ppf(u))
        dist = self.capacity_distribution()
        if dist is None:
            cap = np.array([self.battery_capacity_mean])
        else:
            cap = dist.ppf((np.arange(n_cap) + 0.5) / n_cap)
        return float(self.recharge_energy(miles[:, None], cap[None, :]).mean())

    @property
    def service_rate(self) -> float:
        """Vehicles per hour served by one charger."""
        return self.charger_power * self.charger_efficiency / self.mean_recharge_energy

    @cached_property
    def occupancy_pmf(self) -> np.ndarray:
        """P(n chargers busy), n = 0..c, for the M/M/c steady state."""
        c = self.chargers
        pmf = np.zeros(c + 1)
        if self.arrival_rate == 0:
            pmf[0] = 1.0
            return pmf
        a = self.arrival_rate / self.service_rate
        rho = a / c
        if rho >= 1:
            warnings.warn(
                f"station {self.node}: unstable queue (utilisation {rho:.3f}); "
                "occupancy capped at all chargers busy",
                UnstableQueueWarning,
                stacklevel=2,
            )
            pmf[c] = 1.0
            return pmf
        terms = np.array([a**k / math.factorial(k) for k in range(c)])
        tail = a**c / (math.factorial(c) * (1 - rho))
        p0 = 1.0 / (terms.sum() + tail)
        pmf[:c] = p0 * terms
        pmf[c] = p0 * tail
        return pmf

    def demand_levels(self) -> np.ndarray:
        return np.arange(self.chargers + 1) * self.charger_power

    def demand_from_uniform(self, u) -> np.ndarray:
        """Station demand (kW) by inversion of the occupancy distribution."""
        cdf = np.cumsum(self.occupancy_pmf)
        cdf[-1] = 1.0
        n = np.searchsorted(cdf, np.asarray(u, dtype=float), side="right")
        return np.minimum(n, self.chargers) * self.charger_power

    def moments(self) -> tuple[float, float, float]:
        """Mean, std and skewness of the station demand."""
        x, p = self.demand_levels(), self.occupancy_pmf
        mean = float(p @ x)
        var = float(p @ (x - mean) ** 2)
        sd = math.sqrt(var)
        skew = float(p @ (x - mean) ** 3) / sd**3 if sd > 0 else 0.0
        return mean, sd, skew


def sample_load(model: LoadUncertainty, draw) -> tuple:
    """Load realisation for a standard normal ``draw`` (scalar or array).

    P and Q share the draw (constant power factor); negative realisations
    are truncated to zero.
    """
    scale = np.maximum(0.0, 1.0 + model.std_fraction * np.asarray(draw, dtype=float))
    p, q = model.mean_p * scale, model.mean_q * scale
    if np.ndim(p) == 0:
        return float(p), float(q)
    return p, q


def sample_station_demand(model: PhevStationModel, generator: np.random.Generator, size=None):
    """Station demand in kW drawn from the steady-state occupancy."""
    u = generator.random(size)
    out = model.demand_from_uniform(u)
    return float(out) if size is None else out


def sample_availability(model: AvailabilityModel, generator: np.random.Generator, size=None):
    u = generator.random(size)
    out = (u < model.probability_on).astype(int)
    return int(out) if size is None else out


def sample_recharge_energy(model: PhevStationModel, generator: np.random.Generator, size=None):
    """Per-vehicle recharge energy (kWh) for randomly drawn vehicles."""
    miles = generator.lognormal(model.mileage_mu, model.mileage_sigma, size)
    dist = model.capacity_distribution()
    if dist is None:
        cap = np.full(np.shape(miles), model.battery_capacity_mean)
    else:
        cap = dist.ppf(generator.random(size))
    return model.recharge_energy(miles, cap)


# ------------------------------------------------------------------ scenarios


@dataclass(frozen=True)
class TuningSettings:
    a: float = 1.0
    b: float = 0.05
    replications: int = 20
    convergence_threshold: float = math.inf
    kn_candidates: tuple[int, ...] = (10, 20, 30, 45, 60, 80, 100, 150, 200)
    calibration_samples: int = 5000


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    feeder: Feeder
    loads: tuple[LoadUncertainty, ...] = ()
    availability: tuple[AvailabilityModel, ...] = ()
    stations: tuple[PhevStationModel, ...] = ()
    k_n: int = 45
    mcs_iterations: int = 5000
    seed: int = 0
    outputs: tuple[int, ...] = ()
    correlated_pq: bool = True
    tuning: TuningSettings = field(default_factory=TuningSettings)
    feeder_path: str = ""
    name: str = ""

    def __post_init__(self) -> None:
        ids = set(self.feeder.node_ids)
        slack = self.feeder.slack_id
        for group in (self.loads, self.availability, self.stations):
            for item in group:
                if item.node not in ids:
                    raise ScenarioError(f"node {item.node} is not in the feeder")
                if item.node == slack:
                    raise ScenarioError(f"node {item.node} is the slack node")
        for n in self.outputs:
            if n not in ids:
                raise ScenarioError(f"output node {n} is not in the feeder")
        station_nodes = {s.node for s in self.stations}
        load_nodes = {ld.node for ld in self.loads}
        for av in self.availability:
            if av.target == "station" and av.node not in station_nodes:
                raise ScenarioError(f"availability at {av.node} targets a missing station")
            if av.target == "load" and av.node not in load_nodes:
                raise ScenarioError(f"availability at {av.node} targets a missing load")
        for kind, nodes in (("load", [ld.node for ld in self.loads]),
                            ("station", [s.node for s in self.stations])):
            if len(set(nodes)) != len(nodes):
                raise ScenarioError(f"duplicate {kind} entries")
        if len({(a.node, a.target) for a in self.availability}) != len(self.availability):
            raise ScenarioError("duplicate availability entries")

    def availability_for(self, node: int, target: str) -> AvailabilityModel | None:
        for av in self.availability:
            if av.node == node and av.target == target:
                return av
        return None

    def with_overrides(self, **changes) -> ScenarioSpec:
        return replace(self, **changes)


def _station_from_dict(raw: dict) -> PhevStationModel:
    cap = raw.get("battery_capacity", {})
    miles = raw.get("mileage_lognormal", {})
    try:
        return PhevStationModel(
            node=int(raw["node"]),
            level=int(raw["level"]),
            charger_voltage=float(raw["charger_voltage"]),
            charger_current=float(raw["charger_current"]),
            chargers=int(raw["chargers"]),
            arrival_rate=float(raw["arrival_rate"]),
            battery_capacity_mean=float(cap["mean"]),
            battery_capacity_std=float(cap.get("std", 0.0)),
            mileage_mu=float(miles["mu"]),
            mileage_sigma=float(miles["sigma"]),
            energy_per_mile=float(raw.get("energy_per_mile", 0.3)),
            energy_per_mile_slope=float(raw.get("energy_per_mile_slope", 0.0)),
            all_electric_range=(
                float(raw["all_electric_range"]) if raw.get("all_electric_range") is not None else None
            ),
            charger_efficiency=float(raw.get("charger_efficiency", 0.9)),
        )
    except KeyError as exc:
        raise ScenarioError(f"station entry missing field {exc}") from exc


def scenario_from_dict(data: dict, base_dir: Path | None = None, feeder: Feeder | None = None) -> ScenarioSpec:
    """Build a scenario from its JSON document.

    ``feeder`` is a path relative to the scenario file, an absolute path, or
    the name of a bundled feeder.
    """
    base_dir = base_dir or DATA_DIR
    feeder_ref = data.get("feeder", "")
    if feeder is None:
        feeder = load_feeder(resolve_data_path(feeder_ref, base_dir))

    load_cfg = data.get("loads", {})
    std = float(load_cfg.get("std_fraction", 0.05))
    overrides = {int(o["node"]): o for o in load_cfg.get("overrides", [])}
    excluded = {int(n) for n in load_cfg.get("exclude", [])}
    loads = []
    for node in feeder.nodes:
        if node.kind == "slack" or node.id in excluded:
            continue
        o = overrides.get(node.id, {})
        mean_p = float(o.get("mean_p", node.base_load_p))
        mean_q = float(o.get("mean_q", node.base_load_q))
        if mean_p == 0 and mean_q == 0:
            continue
        loads.append(LoadUncertainty(node.id, mean_p, mean_q, float(o.get("std_fraction", std))))

    availability = tuple(
        AvailabilityModel(int(a["node"]), float(a["probability_on"]), a.get("target", "station"))
        for a in data.get("availability", [])
    )
    stations = tuple(_station_from_dict(s) for s in data.get("stations", []))
    eng = data.get("engines", {})
    tun = data.get("tuning", {})
    tuning = TuningSettings(
        a=float(tun.get("a", 1.0)),
        b=float(tun.get("b", 0.05)),
        replications=int(tun.get("replications", 20)),
        convergence_threshold=float(tun.get("convergence_threshold", math.inf)),
        kn_candidates=tuple(int(k) for k in tun.get("kn_candidates", TuningSettings.kn_candidates)),
        calibration_samples=int(tun.get("calibration_samples", 5000)),
    )
    return ScenarioSpec(
        feeder=feeder,
        loads=tuple(loads),
        availability=availability,
        stations=stations,
        k_n=int(eng.get("k_n", 45)),
        mcs_iterations=int(eng.get("mcs_iterations", 5000)),
        seed=int(eng.get("seed", 0)),
        outputs=tuple(int(n) for n in data.get("outputs", [])),
        correlated_pq=bool(load_cfg.get("correlated_pq", True)),
        tuning=tuning,
        feeder_path=str(feeder_ref),
        name=data.get("name", ""),
    )


def resolve_data_path(ref: str | Path, base_dir: Path | None = None) -> Path:
    """Resolve a file reference against ``base_dir`` and then bundled data."""
    p = Path(ref)
    candidates = [p] if p.is_absolute() else [(base_dir or Path.cwd()) / p, Path.cwd() / p]
    candidates.append(DATA_DIR / p.name)
    if not p.suffix:
        candidates.append(DATA_DIR / f"{p.name}.json")
    for c in candidates:
        if c.is_file():
            return c
    raise ScenarioError(f"cannot find {ref!s}")


def load_scenario(path: str | Path) -> ScenarioSpec:
    """Load a scenario file (path or bundled name such as ``scenario34``)."""
    path = resolve_data_path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    spec = scenario_from_dict(data, base_dir=path.parent)
    if not spec.name:
        spec = spec.with_overrides(name=path.stem)
    return spec


# ------------------------------------------------------------------ variables


@dataclass(frozen=True)
class InputVariable:
    label: str
    kind: str  # "load", "loadq", "station", "availability"
    node: int
    mean: float
    std: float
    skewness: float
    discrete: bool = False


def input_variables(spec: ScenarioSpec) -> list[InputVariable]:
    """Primitive random inputs with their first three moments."""
    out = []
    for ld in spec.loads:
        out.append(InputVariable(f"LOAD:{ld.node}", "load", ld.node, 1.0, ld.std_fraction, 0.0))
        if not spec.correlated_pq:
            out.append(InputVariable(f"LOADQ:{ld.node}", "loadq", ld.node, 1.0, ld.std_fraction, 0.0))
    for st in spec.stations:
        m, s, g = st.moments()
        out.append(InputVariable(f"EV:{st.node}", "station", st.node, m, s, g, discrete=True))
    for av in spec.availability:
        m, s, g = av.moments()
        out.append(InputVariable(f"AVAIL:{av.node}:{av.target}", "availability", av.node, m, s, g,
                                 discrete=True))
    return out


def draw_inputs(spec: ScenarioSpec, rows, seed: int, truncate: bool = True) -> np.ndarray:
    """Realise the primitive inputs for the given row indices.

    Each column uses its own counter stream keyed by ``(seed, row, label)``.
    """
    rows = np.asarray(rows)
    variables = input_variables(spec)
    x = np.empty((rows.size, len(variables)))
    models = {("station", s.node): s for s in spec.stations}
    avail = {(a.node, a.target): a for a in spec.availability}
    stds = {ld.node: ld.std_fraction for ld in spec.loads}
    for j, var in enumerate(variables):
        if var.kind == "load":
            z = rng.normals(seed, rows, rng.column_key(f"P:{var.node}"))
            x[:, j] = 1.0 + stds[var.node] * z
        elif var.kind == "loadq":
            z = rng.normals(seed, rows, rng.column_key(f"Q:{var.node}"))
            x[:, j] = 1.0 + stds[var.node] * z
        elif var.kind == "station":
            u = rng.uniforms(seed, rows, rng.column_key(f"EV:{var.node}"))
            x[:, j] = models[("station", var.node)].demand_from_uniform(u)
        else:
            target = var.label.rsplit(":", 1)[1]
            u = rng.uniforms(seed, rows, rng.column_key(var.label))
            x[:, j] = (u < avail[(var.node, target)].probability_on).astype(float)
        if truncate and var.kind in ("load", "loadq"):
            np.maximum(x[:, j], 0.0, out=x[:, j])
    return x


def injections_from_inputs(spec: ScenarioSpec, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map primitive input rows to per-node P and Q (kW, kvar).

    Nodes without an uncertainty model keep their base load.
    """
    x = np.atleast_2d(x)
    feeder = spec.feeder
    idx = feeder.index
    p0, q0 = feeder.base_injections()
    k = x.shape[0]
    p = np.tile(np.asarray(p0, dtype=float), (k, 1))
    q = np.tile(np.asarray(q0, dtype=float), (k, 1))
    cols = {v.label: j for j, v in enumerate(input_variables(spec))}
    for ld in spec.loads:
        i = idx[ld.node]
        mult_p = x[:, cols[f"LOAD:{ld.node}"]]
        mult_q = x[:, cols[f"LOADQ:{ld.node}"]] if not spec.correlated_pq else mult_p
        gate = 1.0
        av = spec.availability_for(ld.node, "load")
        if av is not None:
            gate = x[:, cols[f"AVAIL:{ld.node}:load"]]
        p[:, i] = ld.mean_p * mult_p * gate
        q[:, i] = ld.mean_q * mult_q * gate
    for st in spec.stations:
        i = idx[st.node]
        demand = x[:, cols[f"EV:{st.node}"]]
        av = spec.availability_for(st.node, "station")
        if av is not None:
            demand = demand * x[:, cols[f"AVAIL:{st.node}:station"]]
        p[:, i] = p[:, i] + demand
    return p, q


@dataclass(frozen=True)
class SampleMatrix:
    """Realised inputs, one row per realisation.

    Columns are ``P:<node>``/``Q:<node>`` (kW/kvar, availability applied),
    ``EV:<node>`` (station kW, availability applied) and
    ``AVAIL:<node>:<target>``.
    """

    values: np.ndarray
    labels: tuple[str, ...]
    seed: int
    p: np.ndarray  # per-node injections, rows x nodes
    q: np.ndarray

    @property
    def k_n(self) -> int:
        return self.values.shape[0]

    def column(self, label: str) -> np.ndarray:
        return self.values[:, self.labels.index(label)]


def build_samples(spec: ScenarioSpec, k_n: int, seed: int, start_row: int = 0) -> SampleMatrix:
    """Draw ``k_n`` realisations deterministically from ``seed``."""
    if k_n < 2:
        raise ScenarioError("k_n must be >= 2")
    rows = np.arange(start_row, start_row + k_n)
    x = draw_inputs(spec, rows, seed)
    p, q = injections_from_inputs(spec, x)
    variables = input_variables(spec)
    cols = {v.label: j for j, v in enumerate(variables)}
    idx = spec.feeder.index

    labels, columns = [], []
    for ld in spec.loads:
        labels += [f"P:{ld.node}", f"Q:{ld.node}"]
        i = idx[ld.node]
        # node P includes station demand; isolate the load share
        mult = x[:, cols[f"LOAD:{ld.node}"]]
        av = spec.availability_for(ld.node, "load")
        gate = x[:, cols[f"AVAIL:{ld.node}:load"]] if av is not None else 1.0
        columns += [ld.mean_p * mult * gate, q[:, i]]
    for st in spec.stations:
        labels.append(f"EV:{st.node}")
        demand = x[:, cols[f"EV:{st.node}"]]
        if spec.availability_for(st.node, "station") is not None:
            demand = demand * x[:, cols[f"AVAIL:{st.node}:station"]]
        columns.append(demand)
    for av in spec.availability:
        labels.append(f"AVAIL:{av.node}:{av.target}")
        columns.append(x[:, cols[f"AVAIL:{av.node}:{av.target}"]])
    values = np.column_stack(columns) if columns else np.zeros((k_n, 0))
    if np.isnan(values).any():
        raise ScenarioError("NaN in sample matrix")
    return SampleMatrix(values=values, labels=tuple(labels), seed=seed, p=p, q=q)
