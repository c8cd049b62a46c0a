"""Iteration traces shared by the iterative solvers."""

import csv
import time


class Trace(list):
    """A list of per-iteration records (dicts) with a fixed column order."""

    def __init__(self, columns):
        super().__init__()
        self.columns = tuple(columns)
        self._t0 = time.perf_counter()

    def record(self, **values):
        if "seconds" in self.columns and "seconds" not in values:
            values["seconds"] = time.perf_counter() - self._t0
        self.append({c: values.get(c) for c in self.columns})

    def column(self, name):
        return [row[name] for row in self]

    def to_csv(self, path_or_file):
        if hasattr(path_or_file, "write"):
            self._write(path_or_file)
        else:
            with open(path_or_file, "w", newline="") as fh:
                self._write(fh)

    def _write(self, fh):
        writer = csv.DictWriter(fh, fieldnames=self.columns, lineterminator="\n")
        writer.writeheader()
        for row in self:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


def _fmt(v):
    if isinstance(v, float):
        return repr(float(v))
    return v
