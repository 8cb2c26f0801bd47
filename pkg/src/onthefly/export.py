"""CSV / JSON export of run records and result tables.

Writes are atomic (temporary file in the target directory, then rename).
CSV uses LF line endings and renders reals with at most 12 significant digits.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

from .errors import ArgumentError, OnTheFlyError
from .harness import SCHEMA_VERSION, RunRecord
from .objectives import grid_rows

TABLE_COLUMNS = {
    "tune": ("repetition", "alpha", "iterations", "best_loss", "verdict"),
    "gd": ("repetition", "init_x1", "init_x2", "alpha", "iterations", "best_loss"),
    "nm": ("repetition", "init_x1", "init_x2", "atol", "maxiter", "iterations_used",
           "best_value"),
    "chain": ("repetition", "N", "accepted", "rejected", "accepted_pct", "mean_alpha"),
    "ea": ("repetition", "pop_size", "generations", "std", "recomb", "mut", "best_fitness",
           "final_mean_fitness"),
    "grid": ("x1", "x2", "value"),
    "histogram": ("bin_x", "bin_y", "count"),
    "trace": ("iteration", "metric"),
}


class ExportError(OnTheFlyError, OSError):
    """I/O failure while writing or reading an export, with the path attached."""


@dataclass
class Table:
    kind: str
    rows: list = field(default_factory=list)

    @property
    def columns(self):
        return TABLE_COLUMNS[self.kind]

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "kind": self.kind,
                "columns": list(self.columns), "rows": [list(r) for r in self.rows]}


def format_value(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.12g}"
    if hasattr(v, "item"):  # numpy scalar
        return format_value(v.item())
    return str(v)


def csv_text(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        if len(row) != len(table.columns):
            raise ArgumentError(f"{table.kind} row has {len(row)} fields, "
                                f"expected {len(table.columns)}")
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def json_text(obj):
    if isinstance(obj, RunRecord):
        obj = obj.to_dict()
    elif isinstance(obj, Table):
        obj = obj.to_dict()
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def write_atomic(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
        try:
            with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from exc


def export(obj, fmt, path):
    """Write a :class:`RunRecord` or :class:`Table` as ``json`` or ``csv``."""
    if fmt == "json":
        write_atomic(path, json_text(obj))
    elif fmt == "csv":
        table = obj if isinstance(obj, Table) else record_table([obj])
        write_atomic(path, csv_text(table))
    else:
        raise ArgumentError(f"unknown export format {fmt!r}")


def load_record(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ArgumentError(f"{path} is not valid JSON: {exc}") from exc
    return RunRecord.from_dict(data)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# -- table builders ----------------------------------------------------------

def table_kind(algorithm):
    return {"gd": "gd", "nm": "nm", "mh": "chain", "sa": "chain", "ea": "ea"}[algorithm]


def record_row(record, repetition=1):
    a, c, s = record.algorithm, record.config, record.summary
    if a == "gd":
        return (repetition, s["init"][0], s["init"][1], c["alpha"], c["iterations"],
                s["best_loss"])
    if a == "nm":
        return (repetition, s["init"][0], s["init"][1], c["atol"], c["maxiter"],
                s["iterations_used"], s["best_value"])
    if a in ("mh", "sa"):
        return (repetition, s["n"], s["accepted"], s["rejected"], s["accepted_pct"],
                s["mean_alpha"])
    return (repetition, c["pop_size"], c["generations"], c["mutation_std"], c["recomb"],
            c["mut"], s["best_fitness"], s["final_mean_fitness"])


def record_table(records):
    """One row per record, in the per-algorithm result-table layout."""
    records = list(records)
    if not records:
        raise ArgumentError("no records to tabulate")
    algos = {table_kind(r.algorithm) for r in records}
    if len(algos) != 1:
        raise ArgumentError("records from different algorithm families cannot share a table")
    return Table(algos.pop(), [record_row(r, i) for i, r in enumerate(records, start=1)])


def tune_table(table):
    return Table("tune", [r.as_tuple() for r in table.rows])


def tune_log_lines(table):
    """JSON lines: one per adjustment, one per repetition cost, then the chosen row."""
    lines = [json.dumps({"kind": "adjustment", **e.to_dict()}) for e in table.events]
    lines += [json.dumps({"kind": "repetition", "repetition": r.repetition, "seed": r.seed,
                          "evaluations": r.evaluations}) for r in table.rows]
    chosen = table.chosen
    if chosen is not None:
        lines.append(json.dumps({"kind": "chosen", "repetition": chosen.repetition,
                                 "alpha": chosen.alpha, "iterations": chosen.iterations,
                                 "best_loss": chosen.best_loss}))
    return "".join(line + "\n" for line in lines)


def grid_table(objective, resolution):
    return Table("grid", list(grid_rows(objective, resolution)))


def histogram_table(grid):
    rows = [(ix, iy, int(grid[iy, ix]))
            for iy in range(grid.shape[0]) for ix in range(grid.shape[1])]
    return Table("histogram", rows)
