"""Probabilistic power flow engines.

All engines map random inputs to node voltage magnitudes through
:func:`pdpf.solver.solve_fbs`:

* ``mcs``  Monte Carlo over counter-based samples,
* ``fsds`` a small sample set plus a tuned window-function density,
* ``tpem`` Hong's two-point (2m) estimate,
* ``ut``   the unscented transform with 2n+1 sigma points.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import density as dens
from .metrics import (
    ErrorIndexReport,
    MomentVector,
    error_indices,
    moments,
    moments_from_central,
    relative_error,
)
from .rng import derive_seed
from .solver import SolverConfig, solve_fbs
from .uncertainty import (
    ScenarioSpec,
    build_samples,
    injections_from_inputs,
    input_variables,
)

FAILURE_FLAG_FRACTION = 0.01


class EngineError(RuntimeError):
    pass


@dataclass
class EngineResult:
    """Per-node voltage-magnitude statistics from one engine run.

    ``moments`` covers every non-slack node; ``densities`` and ``tuning``
    only the requested output nodes.
    """

    engine: str
    moments: dict[int, MomentVector]
    densities: dict[int, dens.DensityEstimate] = field(default_factory=dict)
    tuning: dict[int, dens.TuningResult] = field(default_factory=dict)
    failed: int = 0
    evaluations: int = 0
    seconds: float = 0.0
    seed: int | None = None
    flagged: bool = False
    metadata: dict = field(default_factory=dict)
    samples: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        def mv(m: MomentVector) -> dict:
            return {
                "mean": m.mean, "std": m.std, "skewness": _nan_none(m.skewness),
                "kurtosis": _nan_none(m.kurtosis), "fifth": _nan_none(m.fifth),
                "raw": [_nan_none(r) for r in m.raw], "count": m.count,
            }

        return {
            "engine": self.engine,
            "seed": self.seed,
            "failed": self.failed,
            "evaluations": self.evaluations,
            "seconds": self.seconds,
            "flagged": self.flagged,
            "metadata": self.metadata,
            "moments": {str(k): mv(v) for k, v in self.moments.items()},
            "bandwidths": {str(k): d.bandwidth for k, d in self.densities.items()},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _nan_none(v: float):
    return None if isinstance(v, float) and math.isnan(v) else v


# ---------------------------------------------------------------- solving


def _solve_chunk(args) -> tuple[np.ndarray, np.ndarray]:
    feeder, p, q, cfg = args
    mags = np.empty(p.shape)
    ok = np.zeros(p.shape[0], dtype=bool)
    for r in range(p.shape[0]):
        sol = solve_fbs(feeder, p[r], q[r], cfg)
        mags[r] = sol.magnitudes
        ok[r] = sol.converged
    return mags, ok


def solve_rows(feeder, p: np.ndarray, q: np.ndarray, cfg: SolverConfig | None = None,
               workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Voltage magnitudes for every injection row, plus a converged mask.

    With ``workers > 1`` rows are solved in process chunks; results are
    reassembled in row order.
    """
    cfg = cfg or SolverConfig()
    if workers <= 1 or p.shape[0] < 2 * workers:
        return _solve_chunk((feeder, p, q, cfg))
    bounds = np.linspace(0, p.shape[0], workers + 1).astype(int)
    jobs = [(feeder, p[a:b], q[a:b], cfg) for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_solve_chunk, jobs))
    return np.vstack([m for m, _ in parts]), np.concatenate([o for _, o in parts])


def _non_slack(spec: ScenarioSpec) -> list[int]:
    slack = spec.feeder.slack_id
    return [n for n in spec.feeder.node_ids if n != slack]


def _sample_moments(spec: ScenarioSpec, mags: np.ndarray) -> dict[int, MomentVector]:
    idx = spec.feeder.index
    return {n: moments(mags[:, idx[n]]) for n in _non_slack(spec)}


def _sampled_outputs(spec: ScenarioSpec, n: int, seed: int, cfg, workers):
    sm = build_samples(spec, n, seed)
    mags, ok = solve_rows(spec.feeder, sm.p, sm.q, cfg, workers)
    failed = int((~ok).sum())
    if ok.sum() < 2:
        raise EngineError("fewer than 2 converged samples")
    return mags[ok], failed


def _spread_checked(x: np.ndarray, node: int) -> np.ndarray:
    if np.ptp(x) == 0.0:
        raise EngineError(f"node {node} has zero variance; a single-point density is not estimated")
    return x


def output_samples(spec: ScenarioSpec, node: int, n: int, seed: int,
                   cfg: SolverConfig | None = None, workers: int = 1) -> np.ndarray:
    """Voltage-magnitude samples at ``node`` (converged rows only)."""
    mags, _ = _sampled_outputs(spec, n, seed, cfg, workers)
    return mags[:, spec.feeder.index[node]]


def run_mcs(spec: ScenarioSpec, iterations: int | None = None, seed: int | None = None,
            pdf: bool = False, cfg: SolverConfig | None = None, workers: int = 1,
            keep_samples: bool = False) -> EngineResult:
    """Monte Carlo reference: one FBS solve per sampled realisation.

    With ``pdf`` a Freedman-Diaconis histogram density is attached for each
    output node.
    """
    iterations = iterations or spec.mcs_iterations
    seed = spec.seed if seed is None else seed
    t0 = time.perf_counter()
    mags, failed = _sampled_outputs(spec, iterations, seed, cfg, workers)
    result = EngineResult("mcs", _sample_moments(spec, mags), failed=failed,
                          evaluations=iterations, seed=seed)
    if pdf:
        idx = spec.feeder.index
        for n in spec.outputs:
            x = _spread_checked(mags[:, idx[n]], n)
            result.densities[n] = dens.histogram_reference(x)
    result.seconds = time.perf_counter() - t0
    result.flagged = failed > FAILURE_FLAG_FRACTION * iterations
    if keep_samples:
        result.samples = mags
    return result


def run_fsds(spec: ScenarioSpec, k_n: int | None = None, tuning: dens.TuningConfig | None = None,
             seed: int | None = None, bandwidth: float | str | None = None,
             reference_samples: dict[int, np.ndarray] | None = None,
             cfg: SolverConfig | None = None, workers: int = 1,
             keep_samples: bool = False) -> EngineResult:
    """Sample ``k_n`` realisations, solve each, and estimate output densities.

    The bandwidth per output is tuned against a histogram reference built from
    ``reference_samples`` (a calibration Monte Carlo run) when given, otherwise
    from the engine's own samples. A fixed ``bandwidth`` skips tuning;
    ``"silverman"`` uses the normal-reference rule per output.
    """
    k_n = k_n or spec.k_n
    if k_n < 2:
        raise EngineError("k_n must be >= 2")
    seed = spec.seed if seed is None else seed
    tuning = tuning or tuning_config(spec)
    t0 = time.perf_counter()
    mags, failed = _sampled_outputs(spec, k_n, seed, cfg, workers)
    result = EngineResult("fsds", _sample_moments(spec, mags), failed=failed,
                          evaluations=k_n, seed=seed)
    idx = spec.feeder.index
    if bandwidth == "silverman":
        result.metadata["reference"] = "silverman"
    elif bandwidth is not None:
        result.metadata["reference"] = "fixed"
    else:
        result.metadata["reference"] = "calibration" if reference_samples else "self"
    for n in spec.outputs:
        x = _spread_checked(mags[:, idx[n]], n)
        lam = dens.silverman_bandwidth(x) if bandwidth == "silverman" else bandwidth
        if lam is None:
            ref_x = reference_samples[n] if reference_samples else x
            ref = dens.histogram_reference(ref_x, dens.reference_grid(np.concatenate([ref_x, x])))
            tuned = dens.tune_bandwidth(x, tuning, ref)
            result.tuning[n] = tuned
            lam = tuned.bandwidth
        result.densities[n] = dens.estimate_pdf(x, lam, tuning.kernel)
    result.seconds = time.perf_counter() - t0
    result.flagged = failed > FAILURE_FLAG_FRACTION * k_n
    if keep_samples:
        result.samples = mags
    return result


def tuning_config(spec: ScenarioSpec, **overrides) -> dens.TuningConfig:
    t = spec.tuning
    kw = dict(a=t.a, b=t.b, replications=t.replications,
              convergence_threshold=t.convergence_threshold)
    kw.update(overrides)
    return dens.TuningConfig(**kw)


def calibration_samples(spec: ScenarioSpec, nodes: Sequence[int], seed: int,
                        n: int | None = None, cfg: SolverConfig | None = None,
                        workers: int = 1) -> dict[int, np.ndarray]:
    """Dedicated Monte Carlo run used as the tuning reference."""
    n = n or spec.tuning.calibration_samples
    mags, _ = _sampled_outputs(spec, n, derive_seed(seed, 0xCA1B), cfg, workers)
    idx = spec.feeder.index
    return {node: mags[:, idx[node]] for node in nodes}


def tune_sample_count_for(spec: ScenarioSpec, node: int, seed: int,
                          candidates: Sequence[int] | None = None,
                          cfg: dens.TuningConfig | None = None,
                          reference_samples: np.ndarray | None = None,
                          solver_cfg: SolverConfig | None = None) -> dens.SampleCountResult:
    """Sample-count selection for one output node of a scenario."""
    cfg = cfg or tuning_config(spec)
    candidates = candidates or spec.tuning.kn_candidates
    if reference_samples is None:
        reference_samples = calibration_samples(spec, [node], seed, cfg=solver_cfg)[node]
    ref = dens.histogram_reference(reference_samples)

    def draw(k_n: int, r: int) -> np.ndarray:
        return output_samples(spec, node, k_n, derive_seed(seed, k_n, r), solver_cfg)

    return dens.tune_sample_count(draw, candidates, cfg, ref)


# ---------------------------------------------------------------- point estimates


@dataclass(frozen=True)
class ConcentrationPointSet:
    """Standardized point locations and weights, both shaped (m, 2)."""

    locations: np.ndarray
    weights: np.ndarray

    @property
    def m(self) -> int:
        return self.locations.shape[0]


def concentration_points(skewness: Sequence[float]) -> ConcentrationPointSet:
    """Hong's 2m scheme for ``m`` independent inputs with given skewness."""
    lam3 = np.asarray(skewness, dtype=float)
    m = lam3.size
    if m == 0:
        raise EngineError("two-point estimate needs at least one random input")
    half = lam3 / 2.0
    root = np.sqrt(m + half**2)
    xi = np.column_stack([half + root, half - root])
    denom = m * (xi[:, 0] - xi[:, 1])
    w = np.column_stack([-xi[:, 1] / denom, xi[:, 0] / denom])
    return ConcentrationPointSet(xi, w)


def two_point_estimate(func: Callable[[np.ndarray], np.ndarray], means, stds, skewness):
    """Evaluate ``func`` at the 2m concentration points.

    ``func`` maps a (points, m) array of inputs to (points, outputs). Returns
    the output array and the matching weights, in the order var 1 point 1,
    var 1 point 2, var 2 point 1, ...
    """
    mu = np.asarray(means, dtype=float)
    sd = np.asarray(stds, dtype=float)
    cps = concentration_points(skewness)
    m = cps.m
    x = np.tile(mu, (2 * m, 1))
    for k in range(m):
        x[2 * k, k] = mu[k] + cps.locations[k, 0] * sd[k]
        x[2 * k + 1, k] = mu[k] + cps.locations[k, 1] * sd[k]
    y = np.asarray(func(x), dtype=float)
    return y, cps.weights.ravel()


@dataclass(frozen=True)
class SigmaPointSet:
    points: np.ndarray  # (2n+1, n)
    weights: np.ndarray  # (2n+1,)


def default_w0(n: int) -> float:
    return float(np.clip(1.0 - n / 3.0, -0.999, 0.999))


def matrix_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues floored at zero."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise EngineError("covariance must be square")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-14):
        raise EngineError("covariance is not symmetric")
    vals, vecs = np.linalg.eigh(cov)
    scale = max(1.0, float(np.abs(vals).max(initial=0.0)))
    if vals.min(initial=0.0) < -1e-9 * scale:
        raise EngineError("covariance is not positive semidefinite")
    return (vecs * np.sqrt(np.maximum(vals, 0.0))) @ vecs.T


def sigma_points(mean, cov, w0: float | None = None) -> SigmaPointSet:
    mean = np.asarray(mean, dtype=float)
    n = mean.size
    w0 = default_w0(n) if w0 is None else float(w0)
    if not -1.0 < w0 < 1.0:
        raise EngineError("w0 must lie in (-1, 1)")
    root = matrix_sqrt(np.asarray(cov, dtype=float) * (n / (1.0 - w0)))
    pts = np.vstack([mean, mean + root.T, mean - root.T])
    wi = (1.0 - w0) / (2 * n)
    weights = np.concatenate([[w0], np.full(2 * n, wi)])
    return SigmaPointSet(pts, weights)


def unscented_transform(func: Callable[[np.ndarray], np.ndarray], mean, cov, w0: float | None = None):
    """Weighted mean and covariance of ``func`` over the sigma points."""
    sp = sigma_points(mean, cov, w0)
    y = np.asarray(func(sp.points), dtype=float)
    y_mean = sp.weights @ y
    d = y - y_mean
    y_cov = (d * sp.weights[:, None]).T @ d
    return y_mean, y_cov


def _voltage_map(spec: ScenarioSpec, cfg: SolverConfig | None, counter: list):
    def f(x: np.ndarray) -> np.ndarray:
        p, q = injections_from_inputs(spec, x)
        mags, ok = solve_rows(spec.feeder, p, q, cfg)
        counter[0] += int((~ok).sum())
        return mags

    return f


def run_tpem(spec: ScenarioSpec, cfg: SolverConfig | None = None) -> EngineResult:
    """Two-point estimate of the moments of every node voltage magnitude."""
    t0 = time.perf_counter()
    variables = input_variables(spec)
    failed = [0]
    y, w = two_point_estimate(
        _voltage_map(spec, cfg, failed),
        [v.mean for v in variables],
        [v.std for v in variables],
        [v.skewness for v in variables],
    )
    idx = spec.feeder.index
    mom = {n: moments(y[:, idx[n]], weights=w) for n in _non_slack(spec)}
    result = EngineResult("tpem", mom, failed=failed[0], evaluations=y.shape[0],
                          metadata={"inputs": len(variables)})
    result.seconds = time.perf_counter() - t0
    result.flagged = failed[0] > 0
    return result


def run_ut(spec: ScenarioSpec, w0: float | None = None, cfg: SolverConfig | None = None) -> EngineResult:
    """Unscented transform; reports means and standard deviations only."""
    t0 = time.perf_counter()
    variables = input_variables(spec)
    if any(v.discrete for v in variables):
        warnings.warn("discrete inputs enter the unscented transform as mean/variance-matched "
                      "continuous variables", stacklevel=2)
    mean = np.array([v.mean for v in variables])
    cov = np.diag([v.std**2 for v in variables])
    failed = [0]
    y_mean, y_cov = unscented_transform(_voltage_map(spec, cfg, failed), mean, cov, w0)
    idx = spec.feeder.index
    mom = {n: moments_from_central(float(y_mean[idx[n]]), float(y_cov[idx[n], idx[n]]),
                                   count=2 * len(variables) + 1)
           for n in _non_slack(spec)}
    result = EngineResult("ut", mom, failed=failed[0], evaluations=2 * len(variables) + 1,
                          metadata={"inputs": len(variables),
                                    "w0": default_w0(len(variables)) if w0 is None else w0})
    result.seconds = time.perf_counter() - t0
    result.flagged = failed[0] > 0
    return result


# ---------------------------------------------------------------- comparison


@dataclass
class Comparison:
    reference: str
    reports: dict[str, ErrorIndexReport]
    timing_ratio: dict[str, float]  # reference seconds / engine seconds

    def characteristics(self, results: Sequence[EngineResult], reference: EngineResult,
                        nodes: Sequence[int]) -> list[dict]:
        return characteristics_rows(results, reference, nodes)


def compare_engines(results: Sequence[EngineResult], reference: EngineResult,
                    orders: Sequence[int] = (1, 2, 3, 4, 5), convention: str = "standardized",
                    zero_tol: float = 0.0) -> Comparison:
    """Relative errors of each engine's moments against ``reference``."""
    reports, ratio = {}, {}
    for r in results:
        usable = [o for o in orders if r.engine != "ut" or o <= 2]
        missing = set(reference.moments) - set(r.moments)
        if missing:
            raise EngineError(f"{r.engine}: missing outputs {sorted(missing)[:5]}")
        reports[r.engine] = error_indices(r.moments, reference.moments, usable, convention, zero_tol)
        ratio[r.engine] = reference.seconds / r.seconds if r.seconds > 0 else math.inf
    return Comparison(reference.engine, reports, ratio)


def characteristics_rows(results: Sequence[EngineResult], reference: EngineResult,
                         nodes: Sequence[int]) -> list[dict]:
    """Rows for the mean/STD/skewness table, errors in percent."""
    rows = []
    for node in nodes:
        ref = reference.moments[node]
        for r in [reference] + [x for x in results if x is not reference]:
            m = r.moments[node]
            row = {"node": node, "method": r.engine, "mean": m.mean, "std": m.std,
                   "skewness": m.skewness}
            if r is not reference:
                row["eps_mean_pct"] = 100 * relative_error(m.mean, ref.mean)
                row["eps_std_pct"] = 100 * relative_error(m.std, ref.std)
                row["eps_skew_pct"] = 100 * relative_error(m.skewness, ref.skewness)
            rows.append(row)
    return rows
