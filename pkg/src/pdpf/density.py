"""Finite smoothing of data samples: window-function density estimation.

A density at ``x`` is the share of samples inside a window centred on ``x``
divided by the window volume. With a kernel ``K`` of unit mass and width
``lam`` that reads ``f(x) = sum K((x - x_i) / lam) / (k_n * lam)``. The
bandwidth is chosen by minimising the score ``mc = a * MISE + b * MPPT`` against a
reference density.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import spearmanr

DEFAULT_POINTS = 512
MAX_POINTS = 1 << 20
_CHUNK = 1 << 22


class DensityError(ValueError):
    pass


class WindowFunction:
    """Unit-mass window. ``box`` is the hypercube indicator of width 1.

    On a uniform grid the box is evaluated as its average over each grid cell
    (``cell`` in bandwidth units), which makes the trapezoid mass exact.
    """

    KINDS = ("gaussian", "box")

    def __init__(self, kind: str = "gaussian"):
        if kind not in self.KINDS:
            raise DensityError(f"unknown kernel {kind!r}")
        self.kind = kind
        u = np.linspace(-8.0, 8.0, 16001)
        mass = trapezoid(self(u), u)
        if abs(mass - 1.0) > 1e-6:
            raise DensityError(f"{kind} kernel mass {mass} != 1")

    def __call__(self, u: np.ndarray, cell: float = 0.0) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
        if cell > 0:
            lo = np.maximum(u - 0.5 * cell, -0.5)
            hi = np.minimum(u + 0.5 * cell, 0.5)
            return np.clip(hi - lo, 0.0, None) / cell
        a = np.abs(u)
        # half height on the edge keeps the discretised mass exact
        return np.where(a < 0.5, 1.0, np.where(a == 0.5, 0.5, 0.0))

    @property
    def max_step(self) -> float:
        """Largest grid step, in bandwidths, for accurate trapezoid mass."""
        return 0.5 if self.kind == "gaussian" else 0.1

    def __repr__(self) -> str:
        return f"WindowFunction({self.kind!r})"


def _kernel(kernel) -> WindowFunction:
    return kernel if isinstance(kernel, WindowFunction) else WindowFunction(kernel)


@dataclass(frozen=True)
class DensityEstimate:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float
    kernel: str
    k_n: int

    def integral(self) -> float:
        return float(trapezoid(self.values, self.grid))

    def mode(self) -> float:
        return float(self.grid[np.argmax(self.values)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "density"])
            for x, v in zip(self.grid, self.values):
                w.writerow([f"{x:.12g}", f"{v:.12g}"])


def default_grid(samples, bandwidth: float, kernel="gaussian", points: int = DEFAULT_POINTS) -> np.ndarray:
    """Uniform grid over ``[min - 5 lam, max + 5 lam]``.

    At least ``points`` nodes, refined until the step is small enough for the
    kernel that the trapezoid mass stays within 1e-3 of one.
    """
    x = np.asarray(samples, dtype=float)
    lo, hi = x.min() - 5 * bandwidth, x.max() + 5 * bandwidth
    step = _kernel(kernel).max_step * bandwidth
    n = max(points, int(math.ceil((hi - lo) / step)) + 1)
    if n > MAX_POINTS:
        warnings.warn(f"grid capped at {MAX_POINTS} points; normalisation may degrade", stacklevel=2)
        n = MAX_POINTS
    return np.linspace(lo, hi, n)


def _uniform_step(grid: np.ndarray) -> float:
    if grid.size < 2:
        return 0.0
    d = np.diff(grid)
    return float(d.mean()) if np.allclose(d, d.mean(), rtol=1e-9, atol=0.0) else 0.0


def _evaluate(x: np.ndarray, grid: np.ndarray, lam: float, kern: WindowFunction) -> np.ndarray:
    out = np.empty(grid.size)
    cell = _uniform_step(grid) / lam if kern.kind == "box" else 0.0
    step = max(1, _CHUNK // max(1, x.size))
    for s in range(0, grid.size, step):
        g = grid[s : s + step]
        out[s : s + step] = kern((g[:, None] - x[None, :]) / lam, cell).sum(axis=1)
    return out / (x.size * lam)


def estimate_pdf(samples, bandwidth: float, kernel="gaussian", grid=None) -> DensityEstimate:
    """Window-function density estimate of a scalar sample."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DensityError("empty sample")
    if x.size < 2:
        raise DensityError("need at least 2 samples")
    if not bandwidth > 0:
        raise DensityError("bandwidth must be positive")
    kern = _kernel(kernel)
    grid = default_grid(x, bandwidth, kern) if grid is None else np.asarray(grid, dtype=float)
    values = _evaluate(x, grid, bandwidth, kern)
    return DensityEstimate(grid, values, float(bandwidth), kern.kind, x.size)


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    return 1.06 * float(np.std(x)) * x.size ** (-0.2)


# ---------------------------------------------------------------- references


def reference_grid(samples, points: int = DEFAULT_POINTS, pad: float = 0.25) -> np.ndarray:
    """Grid covering the sample range padded by ``pad`` times the range."""
    x = np.asarray(samples, dtype=float)
    span = float(np.ptp(x))
    if span == 0:
        raise DensityError("zero-variance sample: density is a point mass")
    return np.linspace(x.min() - pad * span, x.max() + pad * span, points)


def histogram_reference(samples, grid=None, bins="fd") -> DensityEstimate:
    """Piecewise-constant histogram density evaluated on ``grid``.

    Freedman-Diaconis bins by default.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2 or np.ptp(x) == 0:
        raise DensityError("zero-variance sample: histogram reference undefined")
    grid = reference_grid(x) if grid is None else np.asarray(grid, dtype=float)
    edges = np.histogram_bin_edges(x, bins=bins)
    dens, edges = np.histogram(x, bins=edges, density=True)
    pos = np.searchsorted(edges, grid, side="right") - 1
    inside = (pos >= 0) & (pos < dens.size)
    # the last edge belongs to the last bin
    pos = np.where(grid == edges[-1], dens.size - 1, pos)
    inside |= grid == edges[-1]
    values = np.where(inside, dens[np.clip(pos, 0, dens.size - 1)], 0.0)
    width = float(edges[1] - edges[0])
    return DensityEstimate(grid, values, width, "histogram", x.size)


def analytic_reference(pdf: Callable[[np.ndarray], np.ndarray], grid) -> DensityEstimate:
    grid = np.asarray(grid, dtype=float)
    return DensityEstimate(grid, np.asarray(pdf(grid), dtype=float), 0.0, "analytic", 0)


# ---------------------------------------------------------------- indices


def _check_grids(a: DensityEstimate, b: DensityEstimate) -> None:
    if a.grid.shape != b.grid.shape or not np.array_equal(a.grid, b.grid):
        raise DensityError("estimates are on different grids")


def mise(estimate: DensityEstimate, reference: DensityEstimate) -> float:
    """Integrated squared difference (one replication of the MISE)."""
    _check_grids(estimate, reference)
    return float(trapezoid((estimate.values - reference.values) ** 2, estimate.grid))


def mppt(estimate: DensityEstimate, reference: DensityEstimate) -> float:
    """Distance between the most probable points. Ties go to the lowest grid index."""
    _check_grids(estimate, reference)
    for d in (estimate, reference):
        if d.values.max() == d.values.min():
            raise DensityError("flat density has no most probable point")
    return abs(float(estimate.grid[np.argmax(estimate.values)] - reference.grid[np.argmax(reference.values)]))


def mc_index(mise_value: float, mppt_value: float, a: float = 1.0, b: float = 0.05) -> float:
    return a * mise_value + b * mppt_value


def count_modes(estimate: DensityEstimate, rel_height: float = 0.01) -> int:
    """Local maxima taller than ``rel_height`` times the global maximum.

    Plateaus count once.
    """
    v = estimate.values
    floor = rel_height * v.max()
    d = np.diff(v)
    nz = np.flatnonzero(d)
    if nz.size == 0:
        return 0
    sign = np.sign(d[nz])
    modes = 0
    # a rise followed (after any plateau) by a fall
    for k in range(sign.size - 1):
        if sign[k] > 0 and sign[k + 1] < 0 and v[nz[k] + 1] >= floor:
            modes += 1
    if sign[0] < 0 and v[0] >= floor:
        modes += 1
    if sign[-1] > 0 and v[-1] >= floor:
        modes += 1
    return modes


# ---------------------------------------------------------------- tuning


@dataclass(frozen=True)
class TuningConfig:
    """Bandwidth and sample-count tuning settings.

    ``lambdas`` defaults to ``n_lambdas`` log-spaced values between
    ``lambda_span`` times the sample std.
    """

    a: float = 1.0
    b: float = 0.05
    lambdas: Sequence[float] | None = None
    n_lambdas: int = 48
    lambda_span: tuple[float, float] = (1e-2, 3.0)
    kernel: str = "gaussian"
    convergence_threshold: float = math.inf
    replications: int = 20

    def __post_init__(self) -> None:
        if self.a < 0 or self.b < 0 or (self.a == 0 and self.b == 0):
            raise DensityError("a and b must be >= 0 and not both 0")

    def lambda_grid(self, samples) -> np.ndarray:
        if self.lambdas is not None:
            lam = np.asarray(self.lambdas, dtype=float)
            if lam.size == 0:
                raise DensityError("empty bandwidth grid")
            return lam
        sd = float(np.std(samples))
        if sd == 0:
            raise DensityError("zero-variance sample: bandwidth undefined")
        lo, hi = self.lambda_span
        return np.geomspace(lo * sd, hi * sd, self.n_lambdas)


@dataclass(frozen=True)
class TuningResult:
    bandwidth: float
    lambdas: np.ndarray
    mise: np.ndarray
    mppt: np.ndarray
    mc: np.ndarray
    mode: str  # "reference" or "lscv"

    @property
    def mc_min(self) -> float:
        return float(np.nanmin(self.mc))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "mise", "mppt", "mc"])
            for row in zip(self.lambdas, self.mise, self.mppt, self.mc):
                w.writerow([f"{v:.12g}" for v in row])


def lscv_score(samples, bandwidth: float) -> float:
    """Least-squares cross-validation score for a gaussian kernel."""
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    d = (x[:, None] - x[None, :]) / bandwidth
    phi = lambda u, s: np.exp(-0.5 * (u / s) ** 2) / (s * math.sqrt(2 * math.pi))
    int_f2 = phi(d, math.sqrt(2.0)).sum() / (n * n * bandwidth)
    k = phi(d, 1.0)
    loo = (k.sum() - np.trace(k)) / ((n - 1) * bandwidth)
    return float(int_f2 - 2.0 * loo / n)


def _argmin_largest(values: np.ndarray) -> int:
    if np.all(np.isnan(values)):
        raise DensityError("tuning curve is all NaN")
    best = np.nanmin(values)
    return int(np.flatnonzero(values == best).max())


def tune_bandwidth(samples, cfg: TuningConfig | None = None, reference: DensityEstimate | None = None) -> TuningResult:
    """Bandwidth minimising the score ``mc`` over the configured grid.

    With ``reference`` the estimates are evaluated on the reference grid and
    scored by MISE and MPPT. Without one the leave-one-out least-squares
    cross-validation score replaces MISE and MPPT is not available (NaN).
    Ties go to the larger bandwidth.
    """
    cfg = cfg or TuningConfig()
    x = np.asarray(samples, dtype=float).ravel()
    lambdas = cfg.lambda_grid(x)
    n = lambdas.size
    mise_v, mppt_v, mc = np.full(n, np.nan), np.full(n, np.nan), np.full(n, np.nan)
    if reference is None:
        if cfg.kernel != "gaussian":
            raise DensityError("cross-validation mode supports the gaussian kernel only")
        for i, lam in enumerate(lambdas):
            mise_v[i] = lscv_score(x, lam)
        mc = cfg.a * mise_v
        mode = "lscv"
    else:
        kern = _kernel(cfg.kernel)
        for i, lam in enumerate(lambdas):
            est = estimate_pdf(x, lam, kern, grid=reference.grid)
            mise_v[i] = mise(est, reference)
            try:
                mppt_v[i] = mppt(est, reference)
            except DensityError:
                continue
            mc[i] = mc_index(mise_v[i], mppt_v[i], cfg.a, cfg.b)
        mode = "reference"
    best = _argmin_largest(mc)
    return TuningResult(float(lambdas[best]), lambdas, mise_v, mppt_v, mc, mode)


@dataclass(frozen=True)
class SampleCountResult:
    k_n: int
    candidates: tuple[int, ...]
    mc_mean: tuple[float, ...]
    mc_std: tuple[float, ...]
    converged: bool
    spearman: float = field(default=math.nan)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k_n", "mc_mean", "mc_std"])
            for row in zip(self.candidates, self.mc_mean, self.mc_std):
                w.writerow([row[0], f"{row[1]:.12g}", f"{row[2]:.12g}"])


def tune_sample_count(
    draw: Callable[[int, int], np.ndarray],
    candidates: Sequence[int],
    cfg: TuningConfig | None = None,
    reference: DensityEstimate | None = None,
) -> SampleCountResult:
    """Smallest sample count whose replicated ``mc`` spread has converged.

    ``draw(k_n, r)`` returns replication ``r`` of ``k_n`` output samples. For
    every candidate the tuned minimum of ``mc`` is computed over
    ``cfg.replications`` replications; the selected ``k_n`` is the first
    candidate from which the standard deviation of ``mc`` stays at or below
    ``cfg.convergence_threshold``.
    """
    cfg = cfg or TuningConfig()
    cands = [int(k) for k in candidates]
    if not cands:
        raise DensityError("no candidate sample counts")
    if any(b <= a for a, b in zip(cands, cands[1:])):
        raise DensityError("candidates must be strictly ascending")
    means, stds = [], []
    for k_n in cands:
        vals = [tune_bandwidth(draw(k_n, r), cfg, reference).mc_min for r in range(cfg.replications)]
        means.append(float(np.mean(vals)))
        stds.append(float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0)
    below = [s <= cfg.convergence_threshold for s in stds]
    chosen, converged = cands[-1], False
    for i in range(len(cands)):
        if all(below[i:]):
            chosen, converged = cands[i], True
            break
    if not converged:
        warnings.warn("no candidate sample count met the convergence threshold", stacklevel=2)
    rho = float(spearmanr(cands, stds).statistic) if len(cands) > 2 else math.nan
    return SampleCountResult(chosen, tuple(cands), tuple(means), tuple(stds), converged, rho)
