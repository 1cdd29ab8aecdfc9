"""Result records and their on-disk schemas.

CSV files are UTF-8 with ``\\n`` line endings.  Leading ``# key=value`` comment
lines carry the config hash and seed; floats are written with ``%.17g`` so that
they round-trip exactly.  Standard headers:

* point sets: ``replica,x,y,centered_height``
* grid measures: ``cell_x,cell_y,mass``
* report tables: ``estimator,params,estimate,stderr,tolerance,pass`` with the
  structured cells JSON-encoded.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dgfflab import __version__
from dgfflab.errors import IoError
from dgfflab.extremes import StatReport, _jsonable

POINT_HEADER = ("replica", "x", "y", "centered_height")
GRID_HEADER = ("cell_x", "cell_y", "mass")
REPORT_HEADER = ("estimator", "params", "estimate", "stderr", "tolerance", "pass")


def artifact_version() -> str:
    """Package version plus a short digest of the installed sources."""
    root = Path(__file__).resolve().parents[1]
    h = hashlib.sha1()
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return f"{__version__}+g{h.hexdigest()[:10]}"


@dataclass
class ResultRecord:
    config_hash: str
    version: str
    wall_clock: float
    reports: list
    files: list
    seed: int = 0
    threads: int = 1
    experiment: str = ""
    config: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "wall_clock": self.wall_clock,
            "seed": self.seed,
            "threads": self.threads,
            "experiment": self.experiment,
            "config": self.config,
            "files": [str(f) for f in self.files],
            "reports": [r.to_dict() for r in self.reports],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRecord":
        return cls(
            d["config_hash"],
            d["version"],
            float(d["wall_clock"]),
            [StatReport.from_dict(r) for r in d["reports"]],
            list(d["files"]),
            int(d["seed"]),
            int(d["threads"]),
            d.get("experiment", ""),
            d.get("config", {}),
        )

    def statistics(self) -> list:
        """The reproducible part of the record (reports only)."""
        return [r.to_dict() for r in self.reports]


# ---------------------------------------------------------------------------
# CSV


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path, header, rows, meta: dict) -> Path:
    """Write rows under comment lines ``# key=value`` (config_hash and seed first)."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for k, v in meta.items():
                fh.write(f"# {k}={v}\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_cell(v) for v in row) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path) -> tuple[dict, list, list]:
    """(meta, header, rows of strings); quoted cells are not supported beyond the report schema."""
    path = Path(path)
    meta, header, rows = {}, None, []
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line.startswith("# ") and header is None:
                    k, _, v = line[2:].partition("=")
                    meta[k] = v
                elif header is None:
                    header = line.split(",")
                elif line:
                    rows.append(line)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return meta, header or [], rows


def point_rows(replica_sets) -> list:
    """Rows (replica, x, y, centered_height) from (replica id, ExtremalPointSet) pairs."""
    out = []
    for k, pts in replica_sets:
        for (x, y), h in zip(pts.positions, pts.heights):
            out.append((k, float(x), float(y), float(h)))
    return out


# ---------------------------------------------------------------------------
# export / import


def _json_cell(v) -> str:
    return json.dumps(v, default=_jsonable, separators=(",", ":"))


def _split_report_line(line: str) -> list:
    # cells are JSON values that may themselves contain commas
    dec = json.JSONDecoder()
    out, i = [], 0
    while i < len(line):
        val, i = dec.raw_decode(line, i)
        out.append(val)
        i += 1
    return out


def export(record: ResultRecord, fmt: str, out_dir=None) -> list:
    """Write ``record`` as ``record.json`` or ``reports.csv`` under out_dir."""
    base = Path(out_dir) if out_dir is not None else Path(record.files[0]).parent if record.files else Path(".")
    if fmt == "json":
        path = base / "record.json"
        try:
            base.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(record.to_dict(), fh, indent=2, default=_jsonable, allow_nan=True)
                fh.write("\n")
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
        return [path]
    if fmt == "csv":
        d = record.to_dict()
        meta = {
            "config_hash": record.config_hash,
            "seed": record.seed,
            "version": record.version,
            "wall_clock": "%.17g" % record.wall_clock,
            "threads": record.threads,
            "experiment": record.experiment,
            "config": json.dumps(record.config, sort_keys=True, separators=(",", ":")),
            "files": json.dumps(d["files"], separators=(",", ":")),
        }
        rows = []
        for r in d["reports"]:
            rows.append([_json_cell(r[k]) for k in REPORT_HEADER])
        return [write_csv(base / "reports.csv", REPORT_HEADER, rows, meta)]
    raise ValueError(f"unknown export format {fmt!r}")


def import_record(path) -> ResultRecord:
    """Inverse of :func:`export` for either format."""
    path = Path(path)
    if path.suffix == ".json":
        try:
            with open(path, encoding="utf-8") as fh:
                return ResultRecord.from_dict(json.load(fh))
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
    meta, header, lines = read_csv(path)
    if tuple(header) != REPORT_HEADER:
        raise IoError(f"{path} is not a report table")
    reports = []
    for line in lines:
        cells = _split_report_line(line)
        reports.append(StatReport.from_dict(dict(zip(REPORT_HEADER, cells))))
    return ResultRecord(
        meta["config_hash"],
        meta["version"],
        float(meta["wall_clock"]),
        reports,
        json.loads(meta["files"]),
        int(meta["seed"]),
        int(meta["threads"]),
        meta.get("experiment", ""),
        json.loads(meta.get("config", "{}")),
    )

