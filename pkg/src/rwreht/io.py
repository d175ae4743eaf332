"""Result persistence: fixed-column CSV, SVG plots derived from CSV, run manifests."""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "format_value",
    "write_csv",
    "read_csv",
    "sha256_file",
    "plot_csv",
    "RunManifest",
    "verify_manifest",
]


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)  # shortest string that round-trips
    if hasattr(v, "item"):  # numpy scalar
        return format_value(v.item())
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Write a UTF-8 CSV with a header row; returns the file's sha256."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} fields, header has {len(columns)}")
            w.writerow([format_value(v) for v in row])
    return sha256_file(path)


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _num(s):
    try:
        return float(s)
    except ValueError:
        return math.nan


def plot_csv(csv_path, svg_path, x: str, ys: Sequence[str], title: str = "", ylabel: str = "",
             logy: bool = False) -> Path:
    """Line plot of columns ``ys`` against ``x`` read back from a CSV file.

    The SVG carries no timestamp and fixed element ids, so identical CSV
    input gives an identical file.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_csv(csv_path)
    with matplotlib.rc_context({"svg.hashsalt": "rwreht", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        xs = [_num(r[x]) for r in rows]
        for col in ys:
            vals = [_num(r[col]) for r in rows]
            ax.plot(xs, vals, marker="o", ms=3, label=col)
        ax.set_xlabel(x)
        ax.set_ylabel(ylabel or ", ".join(ys))
        if logy:
            ax.set_yscale("log")
        if title:
            ax.set_title(title)
        if len(ys) > 1:
            ax.legend()
        fig.tight_layout()
        svg_path = Path(svg_path)
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return svg_path


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str
    started: str = field(default_factory=_now)
    finished: str = ""
    outputs: dict = field(default_factory=dict)  # file name -> sha256
    flags: dict = field(default_factory=dict)

    def record(self, path) -> None:
        path = Path(path)
        self.outputs[path.name] = sha256_file(path)

    def write(self, directory) -> Path:
        self.finished = _now()
        out = Path(directory) / "manifest.json"
        out.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return out

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def verify_manifest(path) -> list[str]:
    """Names of recorded outputs whose current digest differs (or that are missing)."""
    path = Path(path)
    m = RunManifest.read(path)
    bad = []
    for name, digest in sorted(m.outputs.items()):
        f = path.parent / name
        if not f.exists() or sha256_file(f) != digest:
            bad.append(name)
    return bad
