"""Moments and relative error indices against a Monte Carlo reference."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class DegenerateMomentError(ValueError):
    """Standardized moments requested for a zero-variance output."""


@dataclass(frozen=True)
class MomentVector:
    """Mean, std and standardized central moments of orders 3..5.

    ``raw`` holds E[Y^j] for j = 1..5. Orders 3..5 are NaN when ``std`` is 0;
    :meth:`standardized` raises instead.
    """

    mean: float
    std: float
    skewness: float
    kurtosis: float
    fifth: float
    raw: tuple[float, ...]
    count: int

    def standardized(self, order: int) -> float:
        if order < 3 or order > 5:
            raise ValueError("order must be 3, 4 or 5")
        if self.std == 0:
            raise DegenerateMomentError("zero variance: standardized moments undefined")
        return (self.skewness, self.kurtosis, self.fifth)[order - 3]

    def moment(self, order: int, convention: str = "raw") -> float:
        """Moment of ``order`` under ``convention`` ("raw" or "standardized").

        Orders 1 and 2 are always the mean and the standard deviation.
        """
        if order == 1:
            return self.mean
        if order == 2:
            return self.std
        if convention == "raw":
            return self.raw[order - 1]
        if convention == "standardized":
            return self.standardized(order)
        raise ValueError(f"unknown moment convention {convention!r}")


def _from_central(mean: float, central: Sequence[float], raw: Sequence[float], count: int) -> MomentVector:
    var = max(central[0], 0.0)
    std = math.sqrt(var)
    if std == 0.0:
        higher = (math.nan, math.nan, math.nan)
    else:
        higher = tuple(central[j - 2] / std**j for j in (3, 4, 5))
    return MomentVector(mean, std, *higher, raw=tuple(float(r) for r in raw), count=count)


def moments(samples, weights=None) -> MomentVector:
    """Moments of a sample, or of weighted points.

    Unweighted moments use the n-denominator so that sample and point-estimate
    results compare directly. With ``weights`` (which must sum to 1) the raw
    moments are ``sum(w * y**j)``; central moments are taken about the weighted
    mean, which is the same quantity computed without cancellation.
    """
    y = np.asarray(samples, dtype=float).ravel()
    if y.size < 2:
        raise ValueError("need at least 2 points")
    if weights is None:
        mean = float(np.mean(y))
        d = y - mean
        central = [float(np.mean(d**j)) for j in (2, 3, 4, 5)]
        raw = [float(np.mean(y**j)) for j in range(1, 6)]
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != y.shape:
            raise ValueError("weights and samples differ in length")
        mean = float(w @ y)
        d = y - mean
        central = [float(w @ d**j) for j in (2, 3, 4, 5)]
        raw = [float(w @ y**j) for j in range(1, 6)]
    if np.ptp(y) == 0.0:
        central = [0.0, 0.0, 0.0, 0.0]
    return _from_central(mean, central, raw, y.size)


def moments_from_central(mean: float, variance: float, count: int = 0) -> MomentVector:
    """Mean/variance-only result (orders 3..5 unavailable)."""
    raw = (mean, variance + mean**2, math.nan, math.nan, math.nan)
    std = math.sqrt(max(variance, 0.0))
    return MomentVector(mean, std, math.nan, math.nan, math.nan, raw=raw, count=count)


def relative_error(value: float, reference: float, zero_tol: float = 0.0) -> float:
    """``|(reference - value) / reference|``; NaN when the reference is ~0."""
    if not math.isfinite(reference) or abs(reference) <= zero_tol or reference == 0:
        return math.nan
    return abs((reference - value) / reference)


@dataclass(frozen=True)
class ErrorSummary:
    mean: float
    min: float
    max: float
    count: int
    excluded: int = 0


def aggregate_errors(errors: Iterable[float]) -> ErrorSummary:
    """Average, minimum and maximum of per-node errors.

    Undefined (NaN) entries are dropped and counted in ``excluded``.
    """
    values = [float(e) for e in errors]
    kept = [e for e in values if math.isfinite(e)]
    if not kept:
        raise ValueError("no defined error values to aggregate")
    return ErrorSummary(
        mean=sum(kept) / len(kept),
        min=min(kept),
        max=max(kept),
        count=len(kept),
        excluded=len(values) - len(kept),
    )


@dataclass
class ErrorIndexReport:
    """Per-order, per-node relative errors and their aggregates."""

    convention: str
    per_node: dict[int, dict[int, float]] = field(default_factory=dict)  # order -> node -> eps
    summary: dict[int, ErrorSummary] = field(default_factory=dict)


def error_indices(
    values: dict[int, MomentVector],
    reference: dict[int, MomentVector],
    orders: Sequence[int] = (1, 2, 3, 4, 5),
    convention: str = "raw",
    zero_tol: float = 0.0,
) -> ErrorIndexReport:
    """Relative errors of each moment order over the nodes in ``reference``."""
    report = ErrorIndexReport(convention=convention)
    for order in orders:
        per = {}
        for node, ref in reference.items():
            if node not in values:
                raise KeyError(f"node {node} missing from compared result")
            try:
                r = ref.moment(order, convention)
                v = values[node].moment(order, convention)
            except DegenerateMomentError:
                per[node] = math.nan
                continue
            per[node] = relative_error(v, r, zero_tol) if math.isfinite(v) else math.nan
        report.per_node[order] = per
        try:
            report.summary[order] = aggregate_errors(per.values())
        except ValueError:
            pass
    return report


def write_characteristics_csv(path, rows: list[dict]) -> None:
    """Table of mean/STD/skewness per node and method with errors vs MCS."""
    fields = ["node", "method", "mean", "eps_mean_pct", "std", "eps_std_pct", "skewness", "eps_skew_pct"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k, "")) for k in fields})


def write_error_indices_csv(path, reports: dict[str, ErrorIndexReport], orders=(3, 4, 5)) -> None:
    """Rows eps_<j>_min / eps_<j> / eps_<j>_max, one column per engine (percent)."""
    engines = list(reports)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index_pct"] + engines)
        for order in orders:
            for label, attr in ((f"eps_{order}_min", "min"), (f"eps_{order}", "mean"), (f"eps_{order}_max", "max")):
                row = [label]
                for e in engines:
                    s = reports[e].summary.get(order)
                    row.append(_fmt(100.0 * getattr(s, attr)) if s else "")
                w.writerow(row)


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return f"{v:.10g}"
    return str(v)
