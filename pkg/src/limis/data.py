"""Sonar (mines vs rocks) dataset ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

N_FEATURES = 60
LABELS = {"M": 1, "R": 0}
DEFAULT_SONAR = Path(__file__).resolve().parents[2] / "data" / "sonar.all-data"


class SonarParseError(ValueError):
    pass


@dataclass
class SonarDataset:
    features: np.ndarray  # (n, 60), standardised when ``standardized``
    labels: np.ndarray  # (n,) in {0, 1}; 1 = mine
    standardized: bool = False
    column_mean: np.ndarray | None = None
    column_sd: np.ndarray | None = None
    source: str = ""
    raw: np.ndarray | None = field(default=None, repr=False)

    def design(self) -> np.ndarray:
        """Features with a leading intercept column of ones."""
        return np.hstack([np.ones((self.features.shape[0], 1)), self.features])

    def stats(self) -> dict:
        return {"source": self.source, "rows": int(self.features.shape[0]),
                "column_mean": None if self.column_mean is None else self.column_mean.tolist(),
                "column_sd": None if self.column_sd is None else self.column_sd.tolist()}


def standardize(X):
    """Column-wise centring and scaling to unit population variance."""
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    if np.any(sd == 0):
        raise SonarParseError("constant feature column cannot be standardised")
    return (X - mean) / sd, mean, sd


def load_sonar(path=None, standardize_features: bool = True, n_features: int = N_FEATURES) -> SonarDataset:
    """Parse the UCI file: ``n_features`` numeric columns then an M/R label, no header."""
    path = Path(path) if path is not None else DEFAULT_SONAR
    rows, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for r, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != n_features + 1:
                raise SonarParseError(f"row {r}: expected {n_features + 1} columns, found {len(rec)}")
            vals = []
            for c, cell in enumerate(rec[:-1], start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise SonarParseError(f"row {r}, column {c}: non-numeric value {cell!r}") from None
            lab = rec[-1].strip()
            if lab not in LABELS:
                raise SonarParseError(f"row {r}, column {n_features + 1}: unknown label {lab!r}")
            rows.append(vals)
            labels.append(LABELS[lab])
    if not rows:
        raise SonarParseError(f"{path}: no data rows")
    X = np.array(rows)
    y = np.array(labels, dtype=int)
    if not standardize_features:
        return SonarDataset(X, y, False, source=str(path), raw=X)
    Z, mean, sd = standardize(X)
    return SonarDataset(Z, y, True, mean, sd, str(path), X)
