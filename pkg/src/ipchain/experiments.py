"""Experiment orchestration and result serialization behind the command line.

Every routine here returns plain data and writes files through a single
collector; trajectories dispatched to worker processes never share state.
Times in every output file are in units of ``pi/delta``.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from . import chainmap, oracle
from .config import ExperimentConfig
from .errors import ConfigurationError, SimulationError
from .propagate import Scheme, TrajectoryRecord, run

TRAJECTORY_COLUMNS = ("t", "pop_up", "norm_sq", "max_bond", "discarded_weight_cum", "wall_ms")
BOND_COLUMNS = ("t", "bond_index", "dimension")
ORACLE_COLUMNS = ("t", "pop_oracle", "pop_scheme", "abs_error")


def fmt(x) -> str:
    """Shortest round-trip text for a number; identical inputs give identical bytes."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def reduced_time(t, config: ExperimentConfig):
    return np.asarray(t, dtype=float) * config.delta / math.pi


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def _write_json(path: Path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_trajectory(outdir: Path, record: TrajectoryRecord, config: ExperimentConfig, prefix="") -> dict:
    """Trajectory, bond-profile and (optionally) occupation CSVs for one record."""
    outdir = Path(outdir)
    times = reduced_time(record.times, config)
    wall = record.wall_ms if config.record_timing else [0.0] * len(times)
    paths = {"trajectory": outdir / f"{prefix}trajectory.csv", "bonds": outdir / f"{prefix}bonds.csv"}
    _write_rows(
        paths["trajectory"],
        TRAJECTORY_COLUMNS,
        zip(times, record.population_up, record.norm_sq, record.max_bond, record.discarded_cum, wall),
    )
    _write_rows(
        paths["bonds"],
        BOND_COLUMNS,
        ((t, i, dim) for t, profile in zip(times, record.bond_profiles) for i, dim in enumerate(profile)),
    )
    if record.occupations:
        paths["occupations"] = outdir / f"{prefix}occupations.csv"
        with open(paths["occupations"], "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "mode", "occupation"])
            for t, row in zip(times, record.occupations):
                for label, value in zip(record.mode_labels, row):
                    writer.writerow([fmt(t), label, fmt(value)])
    return paths


def gnuplot_script(paths: dict) -> str:
    """Generic gnuplot commands that plot the written CSVs; no plotting happens here."""
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set xlabel 't Delta / pi'"]
    if "trajectory" in paths:
        lines += ["set ylabel 'P_up'", f"plot '{Path(paths['trajectory']).name}' using 1:2 with lines", "pause -1"]
        lines += ["set ylabel 'max bond'", f"plot '{Path(paths['trajectory']).name}' using 1:4 with steps", "pause -1"]
    if "bonds" in paths:
        lines += [
            "set ylabel 'bond index'",
            "set view map",
            f"splot '{Path(paths['bonds']).name}' using 1:2:3 with points palette pt 5 ps 0.5",
            "pause -1",
        ]
    if "comparison" in paths:
        name = Path(paths["comparison"]).name
        n_series = paths.get("n_series", 1)
        plots = ", ".join(f"'{name}' using 1:{i + 2} with lines" for i in range(n_series))
        lines += ["set ylabel 'P_up'", f"plot {plots}", "pause -1"]
    if "oracle" in paths:
        name = Path(paths["oracle"]).name
        lines += ["set ylabel 'P_up'", f"plot '{name}' using 1:2 with lines, '{name}' using 1:3 with points", "pause -1"]
    return "\n".join(lines) + "\n"


# --- chain-coeffs ---------------------------------------------------------


def chain_document(config: ExperimentConfig) -> dict:
    coeffs = config.bath().chain(config.N)
    dec = chainmap.star_decomposition(coeffs)
    return {
        "omegas": coeffs.omegas.tolist(),
        "kappas": coeffs.kappas.tolist(),
        "lambdas": dec.lambdas.tolist(),
        "P": dec.P.tolist(),
        "kappa0": float(dec.kappa0),
    }


def cmd_chain_coeffs(config: ExperimentConfig, output=None) -> Path:
    path = Path(output) if output else Path(config.outdir) / "chain_coeffs.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_json(path, chain_document(config))
    return path


# --- simulate -------------------------------------------------------------


def cmd_simulate(config: ExperimentConfig, gnuplot=False) -> dict:
    """Run one trajectory and write its files; failures leave flagged partial output.

    Returns the run summary written to ``run.json``; its ``status`` is
    ``"complete"`` or ``"partial"``.
    """
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.json").write_text(config.to_json())
    summary = {"status": "complete", "scheme": config.scheme}
    try:
        record = run(config.scheme_config(), config.bath())
    except SimulationError as exc:
        summary.update(status="partial", error=str(exc), failed_step=exc.step)
        record = exc.record
        if record is None:
            _write_json(outdir / "run.json", summary)
            raise
        paths = write_trajectory(outdir, record, config)
        _write_json(outdir / "run.json", summary)
        raise
    paths = write_trajectory(outdir, record, config)
    summary.update(
        n_records=len(record.times),
        final_max_bond=int(record.max_bond[-1]),
        svd_seconds=record.svd_seconds if config.record_timing else 0.0,
        wall_seconds=record.wall_seconds if config.record_timing else 0.0,
    )
    _write_json(outdir / "run.json", summary)
    if gnuplot:
        (outdir / "plot.gp").write_text(gnuplot_script(paths))
    return summary


# --- compare --------------------------------------------------------------


@dataclass(frozen=True)
class RunSpec:
    """One member of a comparison: a scheme and optionally its own local dimension."""

    scheme: str
    local_dim: int | None = None

    @classmethod
    def parse(cls, text: str) -> "RunSpec":
        scheme, _, dim = text.strip().partition(":")
        if scheme not in {s.value for s in Scheme}:
            raise ConfigurationError(f"unknown scheme {scheme!r}", key="schemes")
        if dim:
            try:
                return cls(scheme, int(dim))
            except ValueError:
                raise ConfigurationError(f"bad local dimension in {text!r}", key="schemes") from None
        return cls(scheme)

    def config_for(self, config: ExperimentConfig) -> ExperimentConfig:
        changes = {"scheme": self.scheme}
        if self.local_dim is not None:
            changes["local_dim"] = self.local_dim
        return config.replace(**changes)


def _run_member(config: ExperimentConfig) -> dict:
    """Worker entry point; ships back plain arrays only."""
    record = run(config.scheme_config(), config.bath())
    return {
        "times": list(record.times),
        "population_up": list(record.population_up),
        "max_bond": list(record.max_bond),
        "bond_profiles": record.bond_profiles,
        "wall_seconds": record.wall_seconds,
        "svd_seconds": record.svd_seconds,
    }


def run_members(configs, workers=1) -> list:
    if workers <= 1 or len(configs) == 1:
        return [_run_member(cfg) for cfg in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_member, configs))


def _labels(specs):
    labels, seen = [], {}
    for spec in specs:
        base = spec.scheme if spec.local_dim is None else f"{spec.scheme}{spec.local_dim}"
        seen[base] = seen.get(base, 0) + 1
        labels.append(base if seen[base] == 1 else f"{base}_{seen[base]}")
    return labels


def compare_summary(labels, results, config: ExperimentConfig) -> dict:
    pops = {label: np.asarray(res["population_up"]) for label, res in zip(labels, results)}
    pairs = [
        {"a": a, "b": b, "max_abs_diff": float(np.max(np.abs(pops[a] - pops[b])))}
        for a, b in combinations(labels, 2)
    ]
    runs = {
        label: {
            "final_max_bond": int(res["max_bond"][-1]),
            "peak_max_bond": int(max(res["max_bond"])),
            "wall_seconds": res["wall_seconds"] if config.record_timing else 0.0,
            "svd_seconds": res["svd_seconds"] if config.record_timing else 0.0,
        }
        for label, res in zip(labels, results)
    }
    return {"pairs": pairs, "runs": runs}


def cmd_compare(config: ExperimentConfig, schemes, workers=1, gnuplot=False) -> dict:
    """Run several schemes on the same bath and report how far their populations differ."""
    specs = [s if isinstance(s, RunSpec) else RunSpec.parse(s) for s in schemes]
    if len(specs) < 2:
        raise ConfigurationError("compare needs at least two schemes", key="schemes")
    labels = _labels(specs)
    configs = [spec.config_for(config) for spec in specs]
    results = run_members(configs, workers)
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.json").write_text(config.to_json())
    times = reduced_time(results[0]["times"], config)
    _write_rows(
        outdir / "comparison.csv",
        ["t"] + [f"pop_{label}" for label in labels],
        zip(times, *(res["population_up"] for res in results)),
    )
    for label, res, cfg in zip(labels, results, configs):
        _write_rows(
            outdir / f"bonds_{label}.csv",
            BOND_COLUMNS,
            ((t, i, d) for t, prof in zip(times, res["bond_profiles"]) for i, d in enumerate(prof)),
        )
    summary = compare_summary(labels, results, config)
    _write_json(outdir / "summary.json", summary)
    if gnuplot:
        (outdir / "plot.gp").write_text(
            gnuplot_script({"comparison": outdir / "comparison.csv", "n_series": len(labels)})
        )
    return summary


# --- oracle-check ---------------------------------------------------------


def oracle_populations(config: ExperimentConfig, times, reference="chain"):
    """Exact spin-up populations at ``times`` (in ``1/delta`` units scaled to physical time).

    ``reference="chain"`` propagates the truncated chain Hamiltonian.
    ``reference="native"`` uses the exact model with the truncation the chosen
    scheme actually works in: chain for C, star for S, and the time-dependent
    interaction-picture chain for IC.
    """
    bath = config.bath()
    coeffs = bath.chain(config.N)
    sys = bath.system
    d_b = config.local_dim
    if reference == "chain" or config.scheme == Scheme.C.value:
        return oracle.exact_populations(oracle.dense_hamiltonian(coeffs, sys, config.N, d_b), times)
    if reference != "native":
        raise ConfigurationError(f"unknown reference {reference!r}; use chain or native", key="reference")
    dec = chainmap.star_decomposition(coeffs)
    if config.scheme == Scheme.S.value:
        return oracle.exact_populations(oracle.dense_star_hamiltonian(dec, sys, d_b), times)
    return oracle.interaction_picture_populations(dec, sys, d_b, times)


def cmd_oracle_check(config: ExperimentConfig, reference="chain", gnuplot=False) -> dict:
    record = run(config.scheme_config(), config.bath())
    times = np.asarray(record.times)
    exact = oracle_populations(config, times, reference)
    pops = np.asarray(record.population_up)
    err = np.abs(pops - exact)
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.json").write_text(config.to_json())
    _write_rows(outdir / "oracle_check.csv", ORACLE_COLUMNS, zip(reduced_time(times, config), exact, pops, err))
    summary = {"scheme": config.scheme, "reference": reference, "max_abs_error": float(err.max())}
    _write_json(outdir / "oracle_summary.json", summary)
    if gnuplot:
        (outdir / "plot.gp").write_text(gnuplot_script({"oracle": outdir / "oracle_check.csv"}))
    return summary


# --- bench ----------------------------------------------------------------


def svd_cost(d1, d2, bond) -> float:
    """Leading SVD cost ``d1^2 d2 D^3`` of a two-site update."""
    return float(d1) ** 2 * float(d2) * float(bond) ** 3


def predicted_cost_ratio(d_c, d_ic, bond_c=1.0, bond_ic=None, k=None) -> float:
    """Cost of a chain mode-mode SVD over an interaction-picture spin-mode SVD.

    ``(d_C^3 D_C^3) / (4 d_IC D_IC^3)``; give either ``bond_ic`` or the
    bond ratio ``k = D_IC / D_C``.
    """
    if (bond_ic is None) == (k is None):
        raise ConfigurationError("give exactly one of bond_ic or k", key="k")
    if bond_ic is None:
        bond_ic = k * bond_c
    return svd_cost(d_c, d_c, bond_c) / svd_cost(2, d_ic, bond_ic)


@dataclass(frozen=True)
class BenchEntry:
    scheme: str
    local_dim: int
    wall_seconds: float
    svd_seconds: float
    svd_seconds_per_step: float
    max_bond: int


@dataclass(frozen=True)
class BenchReport:
    chain: BenchEntry
    interaction: BenchEntry
    k: float
    predicted_ratio: float
    measured_wall_ratio: float
    measured_svd_ratio: float

    @property
    def consistent(self) -> bool:
        """Predicted and measured ratios lie on the same side of 1."""
        return math.copysign(1, math.log(self.predicted_ratio)) == math.copysign(1, math.log(self.measured_wall_ratio))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["consistent"] = self.consistent
        return out


def _entry(scheme, local_dim, record: TrajectoryRecord, n_steps) -> BenchEntry:
    steps = max(n_steps, 1)
    return BenchEntry(
        scheme=scheme,
        local_dim=local_dim,
        wall_seconds=record.wall_seconds,
        svd_seconds=record.svd_seconds,
        svd_seconds_per_step=record.svd_seconds / steps,
        max_bond=int(max(record.max_bond)),
    )


def bench_report(record_c: TrajectoryRecord, d_c: int, record_ic: TrajectoryRecord, d_ic: int, n_steps: int) -> BenchReport:
    """Combine a chain run and an interaction-picture run of ``n_steps`` steps into the cost comparison."""
    c = _entry(Scheme.C.value, d_c, record_c, n_steps)
    ic = _entry(Scheme.IC.value, d_ic, record_ic, n_steps)
    if c.wall_seconds <= 0 or ic.wall_seconds <= 0:
        raise ConfigurationError("bench runs must take measurable time", key="t_final")
    k = ic.max_bond / c.max_bond
    return BenchReport(
        chain=c,
        interaction=ic,
        k=k,
        predicted_ratio=predicted_cost_ratio(d_c, d_ic, c.max_bond, bond_ic=ic.max_bond),
        measured_wall_ratio=c.wall_seconds / ic.wall_seconds,
        measured_svd_ratio=c.svd_seconds / ic.svd_seconds if ic.svd_seconds > 0 else math.inf,
    )


def cmd_bench(config: ExperimentConfig, dim_c=60, dim_ic=10) -> BenchReport:
    """Time matched C and IC trajectories (run one after another, not in parallel)."""
    bath = config.bath()
    coeffs = bath.chain(config.N)
    cfg_c = config.replace(scheme="C", local_dim=dim_c).scheme_config()
    rec_c = run(cfg_c, bath, coeffs=coeffs)
    rec_ic = run(config.replace(scheme="IC", local_dim=dim_ic).scheme_config(), bath, coeffs=coeffs)
    report = bench_report(rec_c, dim_c, rec_ic, dim_ic, cfg_c.n_steps)
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.json").write_text(config.to_json())
    _write_json(outdir / "bench.json", report.to_dict())
    return report
