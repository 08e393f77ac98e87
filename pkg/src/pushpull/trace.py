"""Run traces: the per-iteration diagnostics every algorithm family emits.

The CSV schema is fixed (`k, residual, consensus_err, tracking_err,
identity_defect`); floats are written with shortest round-trip ``repr`` so a
rerun of the same seeded configuration produces byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = ("k", "residual", "consensus_err", "tracking_err", "identity_defect")


@dataclass
class RunTrace:
    k: np.ndarray
    residual: np.ndarray
    consensus_err: np.ndarray
    tracking_err: np.ndarray
    identity_defect: np.ndarray
    xbar_err: np.ndarray
    metadata: dict = field(default_factory=dict)
    final_state: object | None = None

    def __len__(self) -> int:
        return len(self.k)

    @property
    def final_residual(self) -> float:
        return float(self.residual[-1])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for i in range(len(self.k)):
                fh.write(
                    f"{int(self.k[i])},{float(self.residual[i])!r},"
                    f"{float(self.consensus_err[i])!r},"
                    f"{float(self.tracking_err[i])!r},"
                    f"{float(self.identity_defect[i])!r}\n"
                )

    @staticmethod
    def read_csv(path) -> "RunTrace":
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        return RunTrace(
            k=data["k"].astype(int),
            residual=data["residual"],
            consensus_err=data["consensus_err"],
            tracking_err=data["tracking_err"],
            identity_defect=data["identity_defect"],
            xbar_err=np.sqrt(np.maximum(data["residual"], 0.0)),
        )

    def summary(self) -> dict:
        out = {
            "iterations": int(self.k[-1]),
            "points": len(self.k),
            "final_residual": self.final_residual,
            "max_identity_defect": float(np.max(self.identity_defect)),
        }
        out.update(self.metadata)
        return out


class TraceRecorder:
    """Accumulates per-iteration rows and finalizes into a RunTrace."""

    def __init__(self):
        self.rows: list[tuple[int, float, float, float, float, float]] = []

    def add(self, k, residual, consensus, tracking, defect, xbar_err):
        self.rows.append(
            (int(k), float(residual), float(consensus), float(tracking), float(defect), float(xbar_err))
        )

    def build(self, metadata: dict, final_state=None) -> RunTrace:
        arr = np.array(self.rows, dtype=float)
        if arr.size == 0:
            arr = np.zeros((0, 6))
        return RunTrace(
            k=arr[:, 0].astype(int),
            residual=arr[:, 1],
            consensus_err=arr[:, 2],
            tracking_err=arr[:, 3],
            identity_defect=arr[:, 4],
            xbar_err=arr[:, 5],
            metadata=metadata,
            final_state=final_state,
        )
