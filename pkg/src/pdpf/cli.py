"""Command line front end: ``pdpf run | solve | tune``.

Every failure is reported as a single JSON object on stderr with a nonzero
exit status so batch drivers can parse it.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import shutil
import subprocess
import sys
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import density as dens
from . import engines as eng
from .feeder import FeederError, load_feeder
from .metrics import write_characteristics_csv, write_error_indices_csv, _fmt
from .rng import derive_seed
from .solver import SolverConfig, solve_fbs
from .uncertainty import ScenarioError, ScenarioSpec, load_scenario, resolve_data_path

ENGINES = ("mcs", "fsds", "tpem", "ut")
ENGINE_STREAM = {"mcs": 1, "fsds": 2}
WORKERS_ENV = "PDPF_WORKERS"


class CliError(RuntimeError):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


@dataclass
class RunManifest:
    """Everything that determines a run's CSV artifacts."""

    scenario: str
    out: str
    seed: int | None = None
    engines: list[str] = field(default_factory=lambda: list(ENGINES))
    iterations: int | None = None
    k_n: int | None = None
    bandwidth: float | None = None
    tune: bool = True
    outputs: list[int] | None = None
    reference: str = "auto"  # auto | mcs | self | calibration

    def validate(self) -> None:
        if not self.engines:
            raise CliError("manifest", "at least one engine is required")
        unknown = [e for e in self.engines if e not in ENGINES]
        if unknown:
            raise CliError("manifest", f"unknown engines: {', '.join(unknown)}")
        if len(set(self.engines)) != len(self.engines):
            raise CliError("manifest", "engines listed twice")
        if self.reference not in ("auto", "mcs", "self", "calibration"):
            raise CliError("manifest", f"unknown reference {self.reference!r}")
        if self.reference == "mcs" and "mcs" not in self.engines:
            raise CliError("manifest", "reference 'mcs' requires the mcs engine")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise CliError("manifest", "bandwidth must be positive")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"], cwd=Path(__file__).parent,
            capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise CliError("environment", f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------- run


def _engine_job(args):
    name, spec, manifest, seed, workers = args
    if name == "mcs":
        return eng.run_mcs(spec, manifest.iterations, seed, pdf=True, workers=workers,
                           keep_samples=True)
    if name == "tpem":
        return eng.run_tpem(spec)
    return eng.run_ut(spec)


def _fsds_reference(spec, manifest, mcs_result, seed, workers):
    mode = manifest.reference
    if mode == "auto":
        mode = "mcs" if mcs_result is not None else "self"
    if mode == "mcs":
        idx = spec.feeder.index
        return {n: mcs_result.samples[:, idx[n]] for n in spec.outputs}
    if mode == "calibration":
        return eng.calibration_samples(spec, spec.outputs, seed, workers=workers)
    return None


def execute(manifest: RunManifest, parallel: bool = False) -> Path:
    """Run every engine of ``manifest`` and write the artifact set.

    Warnings raised by the engines are recorded in ``timing.json``.
    """
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        results, spec, seed = _run_engines(manifest, parallel)
    notes = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    return _write_artifacts(manifest, spec, seed, results, notes)


def _run_engines(manifest: RunManifest, parallel: bool):
    manifest.validate()
    spec = load_scenario(manifest.scenario)
    if manifest.outputs:
        spec = spec.with_overrides(outputs=tuple(manifest.outputs))
    if manifest.k_n is not None:
        spec = spec.with_overrides(k_n=manifest.k_n)
    seed = spec.seed if manifest.seed is None else manifest.seed
    workers = _workers()
    results: dict[str, eng.EngineResult] = {}

    plain = [e for e in manifest.engines if e != "fsds"]
    jobs = [(e, spec, manifest, derive_seed(seed, ENGINE_STREAM.get(e, 0)), workers) for e in plain]
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            for e, r in zip(plain, pool.map(_engine_job, jobs)):
                results[e] = r
    else:
        for job in jobs:
            results[job[0]] = _engine_job(job)

    if "fsds" in manifest.engines:
        fs_seed = derive_seed(seed, ENGINE_STREAM["fsds"])
        ref = None
        if manifest.tune and manifest.bandwidth is None:
            ref = _fsds_reference(spec, manifest, results.get("mcs"), seed, workers)
        bandwidth = manifest.bandwidth
        if not manifest.tune and bandwidth is None:
            bandwidth = "silverman"
        results["fsds"] = eng.run_fsds(spec, seed=fs_seed, bandwidth=bandwidth,
                                       reference_samples=ref, workers=workers)

    return {e: results[e] for e in manifest.engines}, spec, seed


def _write_moments(path: Path, result: eng.EngineResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "mean", "std", "skewness", "kurtosis", "fifth"])
        for node in sorted(result.moments):
            m = result.moments[node]
            w.writerow([node] + [_fmt(float(v)) for v in (m.mean, m.std, m.skewness, m.kurtosis, m.fifth)])


def _write_artifacts(manifest: RunManifest, spec: ScenarioSpec, seed: int,
                     results: dict[str, eng.EngineResult], notes: Sequence[str] = ()) -> Path:
    out = Path(manifest.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".pdpf-", dir=out.parent))
    try:
        for name, r in results.items():
            _write_moments(tmp / f"moments_{name}.csv", r)
            for node, d in sorted(r.densities.items()):
                d.to_csv(tmp / f"pdf_{node}_{name}.csv")
            for node, t in sorted(r.tuning.items()):
                t.to_csv(tmp / f"tuning_curve_{node}.csv")
        if "mcs" in results and len(results) > 1:
            others = [r for n, r in results.items() if n != "mcs"]
            comp = eng.compare_engines(others, results["mcs"])
            write_error_indices_csv(tmp / "errors_vs_mcs.csv", comp.reports, orders=(1, 2, 3, 4, 5))
            write_characteristics_csv(tmp / "characteristics.csv",
                                      eng.characteristics_rows(others, results["mcs"], spec.outputs))
        timing = {
            "version": _version(),
            "seed": seed,
            "manifest_sha256": manifest.digest(),
            "manifest": asdict(manifest),
            "warnings": list(notes),
            "engines": {
                n: {"seconds": r.seconds, "evaluations": r.evaluations, "failed": r.failed,
                    "flagged": r.flagged, "metadata": r.metadata}
                for n, r in results.items()
            },
        }
        (tmp / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
        _publish(tmp, out)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp, ignore_errors=True)
    return out


def _publish(tmp: Path, out: Path) -> None:
    """Move a finished artifact directory into place."""
    if not out.exists():
        os.replace(tmp, out)
        return
    if not out.is_dir():
        raise CliError("output", f"{out} exists and is not a directory")
    for f in sorted(tmp.iterdir()):
        os.replace(f, out / f.name)


# ---------------------------------------------------------------- solve / tune


def solve_to_csv(feeder_ref: str, stream) -> int:
    feeder = load_feeder(resolve_data_path(feeder_ref))
    p, q = feeder.base_injections()
    sol = solve_fbs(feeder, p, q, SolverConfig())
    if not sol.converged:
        raise CliError("solver", f"power flow did not converge ({sol.status})")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["node", "v_re", "v_im", "v_mag", "v_angle_deg"])
    for node, v in zip(feeder.node_ids, sol.voltages):
        w.writerow([node, f"{v.real:.12g}", f"{v.imag:.12g}", f"{abs(v):.12g}",
                    f"{math.degrees(np.angle(v)):.12g}"])
    return len(feeder.node_ids)


def tune(scenario: str, node: int, out: Path, seed: int | None, candidates: Sequence[int] | None,
         k_n: int | None) -> dict:
    spec = load_scenario(scenario)
    if node not in spec.feeder.index or node == spec.feeder.slack_id:
        raise CliError("manifest", f"node {node} is not a non-slack node of the feeder")
    seed = spec.seed if seed is None else seed
    cfg = eng.tuning_config(spec)
    ref_x = eng.calibration_samples(spec, [node], seed)[node]
    kn = eng.tune_sample_count_for(spec, node, seed, candidates, cfg, ref_x)
    k_used = k_n or kn.k_n
    x = eng.output_samples(spec, node, k_used, derive_seed(seed, ENGINE_STREAM["fsds"]))
    ref = dens.histogram_reference(ref_x, dens.reference_grid(np.concatenate([ref_x, x])))
    bw = dens.tune_bandwidth(x, cfg, ref)
    out.mkdir(parents=True, exist_ok=True)
    bw.to_csv(out / f"tuning_curve_{node}.csv")
    kn.to_csv(out / f"sample_count_{node}.csv")
    return {"node": node, "k_n": k_used, "k_n_selected": kn.k_n, "converged": kn.converged,
            "bandwidth": bw.bandwidth}


# ---------------------------------------------------------------- entry point


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _engine_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdpf", description="Probabilistic power flow on radial feeders.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run engines on a scenario and write artifacts")
    run.add_argument("--manifest", type=Path, help="JSON run manifest; flags override its fields")
    run.add_argument("--scenario", help="scenario file or bundled name (scenario34, scenario123)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int)
    run.add_argument("--engines", type=_engine_list, help="comma list from mcs,fsds,tpem,ut")
    run.add_argument("--iterations", type=int, help="Monte Carlo iterations")
    run.add_argument("--kn", type=int, help="FSDS sample count")
    run.add_argument("--lambda", dest="bandwidth", type=float, help="fixed FSDS bandwidth (skips tuning)")
    run.add_argument("--no-tune", action="store_true", help="use the Silverman bandwidth instead of tuning")
    run.add_argument("--outputs", type=_int_list, help="comma list of nodes that get densities")
    run.add_argument("--reference", choices=("auto", "mcs", "self", "calibration"),
                     help="density used to tune the FSDS bandwidth")
    run.add_argument("--parallel-engines", action="store_true",
                     help="run independent engines in separate processes")

    solve = sub.add_parser("solve", help="deterministic power flow at base load")
    solve.add_argument("feeder", help="feeder file or bundled name (feeder34, feeder123)")
    solve.add_argument("--out", type=Path, help="CSV path (default: stdout)")

    tun = sub.add_parser("tune", help="bandwidth and sample-count tuning for one node")
    tun.add_argument("--scenario", required=True)
    tun.add_argument("--node", type=int, required=True)
    tun.add_argument("--out", type=Path, required=True)
    tun.add_argument("--seed", type=int)
    tun.add_argument("--kn", type=int, help="sample count for the bandwidth curve (default: selected)")
    tun.add_argument("--kn-candidates", type=_int_list)
    return parser


def manifest_from_args(args) -> RunManifest:
    data: dict = {}
    if args.manifest:
        try:
            data = json.loads(args.manifest.read_text())
        except OSError as exc:
            raise CliError("manifest", f"cannot read {args.manifest}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise CliError("manifest", f"{args.manifest}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise CliError("manifest", "manifest must be a JSON object")
        known = set(RunManifest.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise CliError("manifest", f"unknown manifest fields: {', '.join(sorted(extra))}")
    overrides = {
        "scenario": args.scenario, "out": args.out, "seed": args.seed, "engines": args.engines,
        "iterations": args.iterations, "k_n": args.kn, "bandwidth": args.bandwidth,
        "outputs": args.outputs, "reference": args.reference,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_tune:
        data["tune"] = False
    for key in ("scenario", "out"):
        if not data.get(key):
            raise CliError("manifest", f"missing required field {key!r}")
    return RunManifest(**data)


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            manifest = manifest_from_args(args)
            out = execute(manifest, parallel=args.parallel_engines)
            print(json.dumps({"status": "ok", "out": str(out)}))
        elif args.command == "solve":
            if args.out:
                with open(args.out, "w", newline="") as fh:
                    solve_to_csv(args.feeder, fh)
            else:
                solve_to_csv(args.feeder, sys.stdout)
        else:
            summary = tune(args.scenario, args.node, args.out, args.seed, args.kn_candidates, args.kn)
            print(json.dumps(summary))
    except CliError as exc:
        return _fail(exc.kind, str(exc), 2)
    except (FeederError, ScenarioError) as exc:
        return _fail("input", str(exc), 2)
    except FileNotFoundError as exc:
        return _fail("input", f"file not found: {exc.filename or exc}", 2)
    except (dens.DensityError, eng.EngineError) as exc:
        return _fail("engine", str(exc), 3)
    return 0


if __name__ == "__main__":
    sys.exit(main())
