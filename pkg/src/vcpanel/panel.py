"""Balanced panel container and its CSV representation.

CSV layout (UTF-8, ``.`` decimals, ``#`` comment lines skipped)::

    unit,period,y,z,<regressor_1>,...,<regressor_p>

one row per (unit, period) cell.  Units keep their order of first
appearance; periods are sorted ascending (numerically when every label
parses as a number).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

REQUIRED_COLUMNS = ("unit", "period", "y", "z")


class PanelError(ValueError):
    """Raised for malformed or unbalanced panel input."""


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != ndim:
        raise PanelError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        raise PanelError(f"{name} has a non-finite entry at index {tuple(int(b) for b in bad)}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PanelData:
    """Balanced N x T panel with p regressors and a scalar index variable.

    Attributes
    ----------
    y : (N, T) array
    x : (N, T, p) array
    z : (N, T) array
    unit_ids, period_ids : label tuples of length N and T
    regressor_names : label tuple of length p
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    unit_ids: tuple = field(default=None)
    period_ids: tuple = field(default=None)
    regressor_names: tuple = field(default=None)

    def __post_init__(self):
        y = _frozen(self.y, 2, "y")
        x = _frozen(self.x, 3, "x")
        z = _frozen(self.z, 2, "z")
        n, t = y.shape
        if n < 2 or t < 2:
            raise PanelError(f"panel needs N >= 2 and T >= 2, got N={n}, T={t}")
        if x.shape[:2] != (n, t) or z.shape != (n, t):
            raise PanelError(
                f"shape mismatch: y {y.shape}, x {x.shape}, z {z.shape}")
        if x.shape[2] < 1:
            raise PanelError("panel needs at least one regressor")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        for name, size, default in (
            ("unit_ids", n, lambda k: f"u{k + 1}"),
            ("period_ids", t, lambda k: str(k + 1)),
            ("regressor_names", x.shape[2], lambda k: f"x{k + 1}"),
        ):
            labels = getattr(self, name)
            labels = tuple(default(k) for k in range(size)) if labels is None else tuple(
                str(v) for v in labels)
            if len(labels) != size:
                raise PanelError(f"{name} has {len(labels)} labels, expected {size}")
            if len(set(labels)) != size:
                raise PanelError(f"{name} contains duplicate labels")
            object.__setattr__(self, name, labels)

    @property
    def n_units(self) -> int:
        return self.y.shape[0]

    @property
    def n_periods(self) -> int:
        return self.y.shape[1]

    @property
    def n_regressors(self) -> int:
        return self.x.shape[2]

    def with_y(self, y) -> "PanelData":
        """Same regressors and labels, new response."""
        return PanelData(y, self.x, self.z, self.unit_ids, self.period_ids,
                         self.regressor_names)

    def subset_regressors(self, columns: Sequence[int]) -> "PanelData":
        columns = [int(c) for c in columns]
        if not columns:
            raise PanelError("cannot build a panel with zero regressors")
        return PanelData(self.y, self.x[:, :, columns], self.z, self.unit_ids,
                         self.period_ids, [self.regressor_names[c] for c in columns])

    def standardized(self) -> tuple["PanelData", np.ndarray, np.ndarray]:
        """Z-score every regressor column over all (i, t) cells.

        Returns the new panel together with the column means and standard
        deviations used.
        """
        flat = self.x.reshape(-1, self.n_regressors)
        mean = flat.mean(axis=0)
        sd = flat.std(axis=0)
        if np.any(sd == 0):
            raise PanelError("cannot standardize a constant regressor")
        x = (self.x - mean) / sd
        return (PanelData(self.y, x, self.z, self.unit_ids, self.period_ids,
                          self.regressor_names), mean, sd)


def _period_key(labels):
    try:
        return sorted(labels, key=float)
    except ValueError:
        return sorted(labels)


def load_panel_csv(path, regressors: Sequence[str] | None = None) -> PanelData:
    """Read a balanced panel from CSV.

    Parameters
    ----------
    path : str or Path
    regressors : sequence of str, optional
        Regressor columns to keep, in order.  Defaults to every column after
        ``unit, period, y, z``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [(k + 1, r) for k, r in enumerate(csv.reader(fh))
                if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise PanelError(f"{path}: empty file")
    _, header = rows[0]
    header = [h.strip() for h in header]
    if tuple(header[:4]) != REQUIRED_COLUMNS:
        raise PanelError(
            f"{path}: header must start with {','.join(REQUIRED_COLUMNS)}, got {header[:4]}")
    all_regs = header[4:]
    if regressors is None:
        regressors = all_regs
    missing = [r for r in regressors if r not in all_regs]
    if missing:
        raise PanelError(f"{path}: unknown regressor columns {missing}")
    if not regressors:
        raise PanelError(f"{path}: no regressor columns")
    col = {name: k for k, name in enumerate(header)}
    value_cols = ["y", "z", *regressors]

    cells: dict[tuple[str, str], list[float]] = {}
    units: dict[str, None] = {}
    periods: set[str] = set()
    for lineno, row in rows[1:]:
        if len(row) != len(header):
            raise PanelError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
        unit, period = row[0].strip(), row[1].strip()
        vals = []
        for name in value_cols:
            raw = row[col[name]].strip()
            try:
                v = float(raw)
            except ValueError:
                raise PanelError(f"{path}: row {lineno}: non-numeric {name}={raw!r}") from None
            if not math.isfinite(v):
                raise PanelError(f"{path}: row {lineno}: non-finite {name}={raw!r}")
            vals.append(v)
        if (unit, period) in cells:
            raise PanelError(f"{path}: row {lineno}: duplicate ({unit}, {period})")
        cells[(unit, period)] = vals
        units.setdefault(unit)
        periods.add(period)

    unit_ids = list(units)
    period_ids = _period_key(periods)
    n, t, p = len(unit_ids), len(period_ids), len(regressors)
    arr = np.empty((n, t, 2 + p))
    for i, u in enumerate(unit_ids):
        for s, per in enumerate(period_ids):
            try:
                arr[i, s] = cells[(u, per)]
            except KeyError:
                raise PanelError(f"{path}: unbalanced panel, missing ({u}, {per})") from None
    return PanelData(arr[:, :, 0], arr[:, :, 2:], arr[:, :, 1], unit_ids, period_ids,
                     regressors)


def write_panel_csv(data: PanelData, path) -> None:
    """Write ``data`` in the layout read by :func:`load_panel_csv`."""
    if path is None or str(path) == "":
        raise PanelError("write_panel_csv needs a non-empty path")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*REQUIRED_COLUMNS, *data.regressor_names])
        for i, u in enumerate(data.unit_ids):
            for s, per in enumerate(data.period_ids):
                vals = (data.y[i, s], data.z[i, s], *data.x[i, s])
                w.writerow([u, per, *(format(v, ".17g") for v in vals)])
