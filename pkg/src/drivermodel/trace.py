"""Uniformly sampled drive traces and their CSV form."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Column order of the six-feature vector; also the row order of model inputs.
FEATURES = ("v", "acc", "d_tl", "v_ref", "tau_sp", "err")
CSV_HEADER = "t,s," + ",".join(FEATURES)
EQ2_TOL = 0.05


@dataclass
class DriveTrace:
    """Time series of positions and feature vectors sampled every ``dt``.

    ``features`` has shape ``(n, 6)`` with columns in ``FEATURES`` order.
    """

    driver_id: str
    dt: float
    positions: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.features = np.asarray(self.features, dtype=float).reshape(-1, len(FEATURES))
        if len(self.positions) != len(self.features):
            raise ValueError("positions and features differ in length")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def __len__(self):
        return len(self.positions)

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    def column(self, name: str) -> np.ndarray:
        return self.features[:, FEATURES.index(name)]

    v = property(lambda self: self.column("v"))
    acc = property(lambda self: self.column("acc"))
    d_tl = property(lambda self: self.column("d_tl"))
    v_ref = property(lambda self: self.column("v_ref"))
    tau_sp = property(lambda self: self.column("tau_sp"))
    err = property(lambda self: self.column("err"))

    def consistency_violation(self) -> float:
        """Largest ``|v[k+1] - (v[k] + acc[k] dt)|`` over the trace."""
        if len(self) < 2:
            return 0.0
        v, acc = self.v, self.acc
        return float(np.max(np.abs(v[1:] - (v[:-1] + acc[:-1] * self.dt))))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        table = np.column_stack([self.t, self.positions, self.features])
        np.savetxt(buf, table, fmt="%.17g", delimiter=",", header=CSV_HEADER, comments="")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path, driver_id: str | None = None) -> DriveTrace:
        path = Path(path)
        with path.open() as fh:
            header = fh.readline().strip()
            if header != CSV_HEADER:
                raise ValueError(f"{path}: unexpected header {header!r}")
            table = np.loadtxt(fh, delimiter=",", ndmin=2)
        if len(table) < 1:
            raise ValueError(f"{path}: empty trace")
        dt = float(table[1, 0] - table[0, 0]) if len(table) > 1 else 0.1
        return cls(driver_id or path.stem, round(dt, 9), table[:, 1], table[:, 2:])
