"""On-disk formats: CSV tables, binary snapshots, flat configs and run manifests.

Snapshots are stored as raw little-endian float64 so they round-trip exactly:

* ``snapshots/grid_<g>.f64``   cell faces of grid ``g`` (``N + 1`` values)
* ``snapshots/snap_<i>.f64``   ``phi`` followed by ``d_t phi`` (``2 N`` values)
* ``snapshots/index.csv``      ``index,t,k,grid,file``
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import sys
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .functionals import FieldState
from .grid import RadialGrid

__all__ = [
    "fmt",
    "write_csv",
    "read_csv",
    "SnapshotWriter",
    "read_snapshots",
    "parse_config",
    "ConfigError",
    "write_manifest",
    "sha256",
    "versions",
]


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(path, header: Iterable[str], rows: Iterable) -> Path:
    """Write rows (dicts keyed by header or sequences) with 17-digit floats and LF endings."""
    path = Path(path)
    header = list(header)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            vals = [row.get(h) for h in header] if isinstance(row, dict) else list(row)
            w.writerow([fmt(v) for v in vals])
    return path


def read_csv(path) -> list[dict]:
    """Read a CSV written by :func:`write_csv`; numeric cells become floats, empty cells ``None``."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for key, val in row.items():
                if val == "":
                    rec[key] = None
                else:
                    try:
                        rec[key] = float(val)
                    except ValueError:
                        rec[key] = val
            out.append(rec)
    return out


class SnapshotWriter:
    """Append snapshots of a run to ``<run_dir>/snapshots``."""

    def __init__(self, run_dir):
        self.dir = Path(run_dir) / "snapshots"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []
        self._grids: list[RadialGrid] = []
        self._rows: list[dict] = []

    def _grid_id(self, grid: RadialGrid) -> int:
        for i, g in enumerate(self._grids):
            if g is grid or (g.n == grid.n and np.array_equal(g.faces, grid.faces)):
                return i
        gid = len(self._grids)
        self._grids.append(grid)
        p = self.dir / f"grid_{gid}.f64"
        np.asarray(grid.faces, dtype="<f8").tofile(p)
        self.files.append(p)
        return gid

    def __call__(self, state: FieldState) -> None:
        gid = self._grid_id(state.grid)
        idx = len(self._rows)
        name = f"snap_{idx:06d}.f64"
        np.concatenate([state.phi, state.pi]).astype("<f8").tofile(self.dir / name)
        self.files.append(self.dir / name)
        self._rows.append({"index": idx, "t": state.t, "k": state.k, "grid": gid, "file": name})
        self.flush()

    def flush(self) -> None:
        p = write_csv(self.dir / "index.csv", ["index", "t", "k", "grid", "file"], self._rows)
        if p not in self.files:
            self.files.append(p)


def read_snapshots(run_dir) -> Iterator[FieldState]:
    sdir = Path(run_dir) / "snapshots"
    if not (sdir / "index.csv").exists():
        raise FileNotFoundError(f"no snapshots under {run_dir}")
    grids: dict[int, RadialGrid] = {}
    for row in read_csv(sdir / "index.csv"):
        gid = int(row["grid"])
        if gid not in grids:
            faces = np.fromfile(sdir / f"grid_{gid}.f64", dtype="<f8")
            grids[gid] = RadialGrid(faces, "stored")
        g = grids[gid]
        data = np.fromfile(sdir / str(row["file"]), dtype="<f8")
        yield FieldState(float(row["t"]), data[: g.n], data[g.n:], g, int(row["k"]))


# ---------------------------------------------------------------------------
# configs and manifests
# ---------------------------------------------------------------------------
class ConfigError(ValueError):
    pass


def parse_config(path) -> dict:
    """Flat ``key = value`` text; ``#`` starts a comment.  Values stay strings."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"{path}:{n}: expected 'key = value'")
            out[key.strip()] = val.strip()
    return out


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    from . import __version__

    out = {"sigma_collapse": __version__, "python": platform.python_version(),
           "numpy": np.__version__}
    import scipy

    out["scipy"] = scipy.__version__
    try:
        import numba

        out["numba"] = numba.__version__
    except ImportError:  # pragma: no cover
        out["numba"] = None
    from . import kernels

    out["kernel_backend"] = kernels.BACKEND
    return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, Path):
        return str(x)
    return x


def write_json(path, obj) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_manifest(out_dir, files: Iterable, config: dict, status: str, extra: dict | None = None,
                   wall_time: float | None = None) -> Path:
    """Write ``manifest.json`` listing every output file with its checksum; call this last."""
    out_dir = Path(out_dir)
    inventory = []
    for f in sorted({Path(f).resolve() for f in files}):
        if f.name == "manifest.json":
            continue
        inventory.append({"path": os.path.relpath(f, out_dir.resolve()), "bytes": f.stat().st_size,
                          "sha256": sha256(f)})
    manifest = {
        "config": config,
        "status": status,
        "versions": versions(),
        "argv": sys.argv[1:],
        "wall_time_s": wall_time,
        "files": inventory,
    }
    if extra:
        manifest.update(extra)
    return write_json(out_dir / "manifest.json", manifest)
