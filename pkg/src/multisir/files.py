"""Machine-readable outputs: snapshot and sweep CSVs, plot data, run manifests.

Every float is written with 17 significant digits so files round-trip
exactly. Readers accept only the shapes the writers produce.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

import numpy as np

from multisir.errors import ConfigError
from multisir.sim import SimState

FMT = "%.17g"
SWEEP_COLUMNS = ("s0", "regime", "s_inf_analytic", "s_inf_measured", "p", "k_sequence")


def fmt(value) -> str:
    if value is None:
        return ""
    return format(float(value), ".17g")


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def snapshot_header(n_strains: int) -> List[str]:
    return (["x", "S"] + [f"I_{k}" for k in range(1, n_strains + 1)]
            + [f"R_{k}" for k in range(1, n_strains + 1)])


def write_snapshot(path, x: np.ndarray, state: SimState, config_hash: str) -> Path:
    """Write one snapshot as ``# t=... config_hash=...`` followed by a CSV table."""
    path = Path(path)
    n = state.I.shape[0]
    table = np.column_stack([x, state.S, *state.I, *state.R])
    buf = io.StringIO()
    buf.write(f"# t={fmt(state.t)} config_hash={config_hash}\n")
    buf.write(",".join(snapshot_header(n)) + "\n")
    np.savetxt(buf, table, fmt=FMT, delimiter=",")
    path.write_text(buf.getvalue())
    return path


@dataclass
class SnapshotData:
    t: float
    config_hash: str
    x: np.ndarray
    S: np.ndarray
    I: np.ndarray
    R: np.ndarray


def read_snapshot(path) -> SnapshotData:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().strip()
        header = fh.readline().strip().split(",")
        if not first.startswith("# t=") or header[:2] != ["x", "S"]:
            raise ConfigError(str(path), "not a snapshot CSV (expected '# t=...' line and x,S,... header)")
        meta = dict(item.split("=", 1) for item in first[2:].split())
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    n = (len(header) - 2) // 2
    return SnapshotData(
        t=float(meta["t"]),
        config_hash=meta.get("config_hash", ""),
        x=data[:, 0],
        S=data[:, 1],
        I=data[:, 2:2 + n].T,
        R=data[:, 2 + n:2 + 2 * n].T,
    )


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def sweep_csv(sweep) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for pt in sweep.points:
        w.writerow([
            fmt(pt.s0),
            pt.regime,
            fmt(pt.s_inf_analytic),
            fmt(pt.s_inf_measured) if pt.s_inf_measured is not None and math.isfinite(pt.s_inf_measured) else "",
            pt.outcome.p,
            " ".join(str(k) for k in pt.outcome.indices),
        ])
    return buf.getvalue()


def sweep_plot_data(sweep) -> str:
    """Two whitespace-separated columns ``S0 S_inf``, one point per line."""
    lines = ["# s0 s_inf"]
    lines += [f"{fmt(pt.s0)} {fmt(pt.s_inf_analytic)}" for pt in sweep.points]
    return "\n".join(lines) + "\n"


@dataclass
class SweepRow:
    s0: float
    regime: str
    s_inf_analytic: float
    s_inf_measured: Optional[float]
    p: int
    k_sequence: tuple


def read_sweep_csv(path) -> List[SweepRow]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != SWEEP_COLUMNS:
            raise ConfigError(str(path), f"not a sweep CSV (expected header {','.join(SWEEP_COLUMNS)})")
        rows = []
        for line in reader:
            s0, regime, s_inf, s_meas, p, ks = line
            rows.append(SweepRow(
                float(s0), regime, float(s_inf),
                float(s_meas) if s_meas else None,
                int(p),
                tuple(int(k) for k in ks.split()),
            ))
    return rows


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Provenance record written next to every command's outputs.

    Timestamps are the only fields that change between identical runs.
    """

    command: str
    config_hash: str
    version: str
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: Optional[str] = None
    status: str = "running"
    abort_reason: Optional[str] = None

    def add_output(self, path) -> None:
        self.outputs.append(str(path))

    def finish(self, status: str, abort_reason: Optional[str] = None) -> None:
        self.status = status
        self.abort_reason = abort_reason
        self.finished = _now()

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "version": self.version,
            "inputs": list(self.inputs),
            "outputs": sorted(self.outputs),
            "timestamps": {"started": self.started, "finished": self.finished},
            "status": self.status,
            "abort_reason": self.abort_reason,
        }

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path
