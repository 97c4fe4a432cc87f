"""Deterministic report writers: JSON, long-format CSV, run manifest.

Outputs are byte-identical across runs for the same (config, seed): keys
are sorted, floats use shortest round-trip repr, and nothing time- or
host-dependent is written.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__

__all__ = [
    "jsonable",
    "write_json",
    "write_csv",
    "write_manifest",
    "curves_long_csv",
    "observables_csv",
]


def jsonable(x):
    """Recursively convert numpy scalars/arrays so json can serialize them."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return path


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_manifest(out_dir: Path, config_text: str, cfg) -> Path:
    """Run manifest: config hash, seed, grids, library version, commands."""
    manifest = {
        "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
        "seed": cfg.seed,
        "grid": {
            "dt": cfg.grid.dt,
            "horizon_t": cfg.grid.horizon_t,
            "horizon_xi": cfg.grid.horizon_xi,
        },
        "n_paths": cfg.n_paths,
        "commands": list(cfg.commands),
        "version": __version__,
        "schema": 1,
    }
    return write_json(Path(out_dir) / "manifest.json", manifest)


def curves_long_csv(path: Path, ens) -> Path:
    """Ensemble curve export, columns exactly (path, t, index, xi, value)."""
    if ens.curve_values is None:
        raise ValueError("ensemble was simulated without curve snapshots")
    rows = []
    xi = ens.grid.dt * np.arange(ens.curve_values.shape[-1])
    for p in range(ens.n_paths):
        for kt, t in enumerate(ens.obs_times):
            for i in range(ens.n_indices):
                vals = ens.curve_values[p, kt, i]
                rows.extend(
                    (p, float(t), i, float(x), float(v))
                    for x, v in zip(xi, vals)
                )
    return write_csv(path, ["path", "t", "index", "xi", "value"], rows)


def observables_csv(path: Path, ens) -> Path:
    """Per-path observables: spots, short ends, numeraire, deflator."""
    rows = []
    for p in range(ens.n_paths):
        for kt, t in enumerate(ens.obs_times):
            for i in range(ens.n_indices):
                rows.append(
                    (
                        p,
                        float(t),
                        i,
                        float(ens.spots[p, kt, i]),
                        float(ens.short_ends[p, kt, i]),
                        float(ens.numeraire[p, kt]),
                        float(ens.deflator[p, kt]),
                    )
                )
    return write_csv(
        path,
        ["path", "t", "index", "spot", "short_end", "numeraire", "deflator"],
        rows,
    )
