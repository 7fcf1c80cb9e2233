"""
Results repository: writes ensemble traces, sidecars, manifests and sweep
summaries under an output directory, and reads manifests back for replay.
"""

import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import structlog

from src.models.results import (
    CSV_COLUMNS,
    SUMMARY_COLUMNS,
    TRACE_COLUMNS,
    EnsembleResult,
    ResolvedParameters,
    RunManifest,
    SweepRow,
)
from src.repositories.base import JsonRepository, write_json

logger = structlog.get_logger(__name__)

FLOAT_FORMAT = "%.17g"


def ensemble_frame(result: EnsembleResult) -> pd.DataFrame:
    """Ensemble means per step plus the two spread columns, in CSV column order."""
    frame = pd.DataFrame({"step": np.arange(result.horizon, dtype=np.int64)})
    for name in TRACE_COLUMNS:
        frame[name] = result.mean[name]
    frame["mismatch_std"] = result.std["mismatch_l2"]
    frame["tracking_std"] = result.std["tracking_err_weighted"]
    return frame.loc[:, list(CSV_COLUMNS)]


def _finite_or_none(value: float | None) -> float | None:
    if value is None or not math.isfinite(value):
        return None
    return value


class ResultsRepository(JsonRepository[RunManifest]):
    """
    Repository for run outputs.

    A run named `tc1` writes `tc1.csv`, `tc1.json` (sidecar) and
    `tc1.manifest.json` under the root directory.
    """

    model_class = RunManifest

    def write_ensemble_csv(self, name: str, result: EnsembleResult) -> Path:
        """Write the per-step ensemble CSV."""
        path = self.ensure_root() / f"{name}.csv"
        ensemble_frame(result).to_csv(
            path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
        )
        logger.info("csv_written", path=str(path), rows=result.horizon)
        return path

    def write_sidecar(
        self,
        name: str,
        scenario_hash: str,
        resolved: ResolvedParameters,
        result: EnsembleResult,
    ) -> Path:
        """Write the JSON sidecar next to the CSV."""
        path = self.ensure_root() / f"{name}.json"
        write_json(
            path,
            {
                "scenario_hash": scenario_hash,
                "seeds": result.seeds,
                "C": resolved.c_min,
                "M_lip": resolved.m_lip,
                "epsilon": resolved.epsilon,
                "epsilon_rule": resolved.epsilon_rule,
                "step_size_bounds": {
                    "sync": resolved.sync_bound,
                    "dynamic": resolved.dynamic_bound,
                    "classical": resolved.classical_bound,
                },
                "spectral_radius": resolved.spectral_radius,
                "b2_max": result.b2.max_drift,
                "b2_mean": result.b2.mean_drift,
                "diverged": result.diverged,
            },
        )
        return path

    def write_manifest(self, name: str, manifest: RunManifest) -> Path:
        """Write the run manifest."""
        return self.save(manifest, f"{name}.manifest.json")

    def read_manifest(self, path: Path | str) -> RunManifest:
        """Read a manifest written by write_manifest."""
        return self.load(path)

    def write_summary(self, rows: list[SweepRow], extra: dict[str, Any] | None = None) -> Path:
        """
        Write the sweep summary CSV and its `summary.json` sidecar.

        Failed grid points keep NaN metrics in the CSV and are listed with
        their errors in the sidecar.
        """
        root = self.ensure_root()
        frame = pd.DataFrame([row.model_dump() for row in rows], columns=[*SUMMARY_COLUMNS])
        path = root / "summary.csv"
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

        write_json(
            root / "summary.json",
            {
                **(extra or {}),
                "points": [
                    {
                        "param_value": row.param_value,
                        "steady_state_mismatch": _finite_or_none(row.steady_state_mismatch),
                        "steady_state_tracking": _finite_or_none(row.steady_state_tracking),
                        "bound": _finite_or_none(row.bound),
                        "ratio": _finite_or_none(row.ratio),
                    }
                    for row in rows
                ],
                "failures": [
                    {"param_value": row.param_value, "error": row.error}
                    for row in rows
                    if row.error is not None
                ],
            },
        )
        logger.info("summary_written", path=str(path), points=len(rows))
        return path


def read_ensemble_csv(path: Path | str) -> pd.DataFrame:
    """Read an ensemble CSV back into a DataFrame."""
    return pd.read_csv(path)
