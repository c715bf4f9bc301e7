"""manifest.json and results.csv emission."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import platform
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from .config import ExperimentConfig
from .runner import RunOutcome, thread_count


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_results_csv(rows: list[dict], path) -> None:
    """Header row plus one row per record; csv quoting follows RFC 4180."""
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def build_manifest(cfg: ExperimentConfig, outcome: RunOutcome) -> dict:
    grids = {"main": {**cfg.grid.to_dict(), "checksum": cfg.grid.checksum()}}
    return _jsonable(
        {
            "library": "oddnls",
            "version": __version__,
            "experiment": outcome.experiment,
            "status": outcome.status,
            "seed": cfg.seed,
            "config": cfg.to_dict(),
            "grid_checksums": grids,
            "checks": outcome.checks,
            "summary": outcome.summary,
            "artifacts": outcome.artifacts,
            "threads": thread_count(),
            "environment": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        }
    )


def write_outputs(cfg: ExperimentConfig, outcome: RunOutcome, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(outcome.rows, out / "results.csv")
    (out / "manifest.json").write_text(json.dumps(build_manifest(cfg, outcome), indent=2, sort_keys=True))
    return out
