"""Experiment reports: JSON serialization and RFC 4180 CSV emission.

Reports are deterministic given (config, seed): records are emitted in a
fixed order with floats printed via repr (17 significant digits, exact
round trip); only the wall-time field varies between identical runs.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

from . import RNG_ALGORITHM, __version__
from .errors import IoError, ParseError

__all__ = ["ExperimentReport", "CSV_COLUMNS", "emit_csv", "report_to_json", "report_from_json"]

CSV_COLUMNS = {
    "no_broadcast": ["lambda", "marginal_disturbance", "output_coherence", "converged"],
    "tradeoff": ["t", "ft_input", "ft_output", "irrev", "lhs", "rhs", "slack", "converged"],
    "degradation": ["induced_covariant", "induced_witness", "irrev_lower_bound", "converged"],
    "nonadditivity": ["construction", "measure", "f_joint", "f_margA", "f_margB_or_n_scaled", "violated"],
    "irrev": ["iteration", "fidelity"],
    "ki": ["block", "m", "k", "reconstruction_residual"],
    "cloner": ["d", "n", "shrink", "trace_error", "permutation_error", "marginal_error"],
    "lemma8": ["dim", "max_violation"],
    "complementarity": ["identity_marginal", "identity_deviation", "erasure_residual"],
}


@dataclass(frozen=True)
class ExperimentReport:
    experiment: str
    config: dict
    seed: int
    records: tuple[dict, ...]
    assertions: tuple[dict, ...]
    wall_time_s: float
    rng_algorithm: str = RNG_ALGORITHM
    tool_version: str = __version__

    @property
    def all_passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)


def report_to_json(report: ExperimentReport) -> str:
    payload = {
        "experiment": report.experiment,
        "config": report.config,
        "seed": report.seed,
        "rng_algorithm": report.rng_algorithm,
        "tool_version": report.tool_version,
        "wall_time_s": report.wall_time_s,
        "records": list(report.records),
        "assertions": list(report.assertions),
    }
    return json.dumps(payload, sort_keys=True, indent=2)


def report_from_json(text: str) -> ExperimentReport:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"report JSON is malformed: {exc}") from exc
    return ExperimentReport(
        experiment=payload["experiment"],
        config=payload["config"],
        seed=payload["seed"],
        records=tuple(payload["records"]),
        assertions=tuple(payload["assertions"]),
        wall_time_s=payload["wall_time_s"],
        rng_algorithm=payload["rng_algorithm"],
        tool_version=payload["tool_version"],
    )


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(report: ExperimentReport) -> str:
    """One row per record with the fixed per-experiment header."""
    columns = CSV_COLUMNS.get(report.experiment)
    if columns is None:
        raise IoError(f"no CSV schema for experiment {report.experiment!r}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(columns)
    for rec in report.records:
        writer.writerow([_format_cell(rec.get(col)) for col in columns])
    return buf.getvalue()
