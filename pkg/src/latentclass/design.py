"""Labelled designs: input points with region signs, input scaling and CSV I/O."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core_gp import as_points

REGION_TO_SIGN = {1: -1, 2: 1}
SIGN_TO_REGION = {-1: 1, 1: 2}


class DatasetError(ValueError):
    """Malformed dataset file. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ScaleInfo:
    """Per-dimension affine map ``u = (x - offset) / width``."""

    offset: np.ndarray
    width: np.ndarray

    @classmethod
    def unit_box(cls, points, ranges=None) -> "ScaleInfo":
        """Map the bounding box (or given ``ranges``) onto ``[0, 1]^d``."""
        if ranges is not None:
            r = np.asarray(ranges, dtype=float).reshape(-1, 2)
            lo, hi = r[:, 0], r[:, 1]
        else:
            X = as_points(points)
            lo, hi = X.min(axis=0), X.max(axis=0)
        width = np.where(hi > lo, hi - lo, 1.0)
        return cls(lo.astype(float), width.astype(float))

    @classmethod
    def identity(cls, d: int) -> "ScaleInfo":
        return cls(np.zeros(d), np.ones(d))

    def forward(self, points) -> np.ndarray:
        return (as_points(points) - self.offset) / self.width

    def inverse(self, scaled) -> np.ndarray:
        return as_points(scaled) * self.width + self.offset


@dataclass(frozen=True)
class LabelledDesign:
    """Training data: raw input points and their signs (-1 region 1, +1 region 2)."""

    points: np.ndarray
    labels: np.ndarray
    scale: ScaleInfo

    def __post_init__(self):
        X = as_points(self.points).copy()
        y = np.asarray(self.labels).astype(int).ravel().copy()
        if X.shape[0] != y.size:
            raise ValueError(f"{X.shape[0]} points but {y.size} labels")
        if X.shape[0] < 1:
            raise ValueError("design is empty")
        if not np.all(np.isin(y, (-1, 1))):
            raise ValueError("labels must be -1 or +1")
        if self.scale.offset.shape != (X.shape[1],):
            raise ValueError("scale dimension does not match points")
        neg, pos = X[y < 0], X[y > 0]
        if neg.size and pos.size:
            same = np.all(neg[:, None, :] == pos[None, :, :], axis=2)
            if same.any():
                raise ValueError("identical points carry opposite labels")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "labels", y)

    @classmethod
    def from_arrays(cls, points, labels, ranges=None) -> "LabelledDesign":
        X = as_points(points)
        return cls(X, labels, ScaleInfo.unit_box(X, ranges))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def single_class(self) -> bool:
        return np.unique(self.labels).size < 2

    def scaled(self) -> np.ndarray:
        return self.scale.forward(self.points)

    def subset(self, idx) -> "LabelledDesign":
        idx = np.asarray(idx, dtype=int)
        return LabelledDesign(self.points[idx], self.labels[idx], self.scale)

    def regions(self) -> np.ndarray:
        return np.where(self.labels < 0, 1, 2)


def write_dataset(design: LabelledDesign, path_or_buf=None) -> str:
    """Write ``x1..xd,region`` CSV; returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{k + 1}" for k in range(design.dim)] + ["region"])
    for x, r in zip(design.points, design.regions()):
        w.writerow([repr(float(v)) for v in x] + [int(r)])
    text = buf.getvalue()
    if path_or_buf is not None:
        Path(path_or_buf).write_text(text)
    return text


def read_dataset(path_or_text, ranges=None) -> LabelledDesign:
    """Parse a dataset CSV (path or literal text) into a design scaled to the unit box."""
    if isinstance(path_or_text, Path) or (
        isinstance(path_or_text, str) and "\n" not in path_or_text
    ):
        text = Path(path_or_text).read_text()
    else:
        text = path_or_text
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DatasetError("empty file", line=1)
    header = [h.strip() for h in rows[0]]
    if "region" not in header:
        raise DatasetError("missing required column 'region'", line=1)
    ri = header.index("region")
    xcols = [i for i, h in enumerate(header) if i != ri]
    names = [header[i] for i in xcols]
    if not names or names != [f"x{k + 1}" for k in range(len(names))]:
        raise DatasetError(f"input columns must be x1..xd, got {names}", line=1)
    pts, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DatasetError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            x = [float(row[i]) for i in xcols]
        except ValueError as exc:
            raise DatasetError(f"non-numeric input value ({exc})", line=lineno) from None
        if not all(np.isfinite(x)):
            raise DatasetError("non-finite input value", line=lineno)
        reg = row[ri].strip()
        if reg not in ("1", "2"):
            raise DatasetError(f"region must be 1 or 2, got {reg!r}", line=lineno)
        pts.append(x)
        labels.append(REGION_TO_SIGN[int(reg)])
    if not pts:
        raise DatasetError("no data rows", line=2)
    design = LabelledDesign.from_arrays(np.array(pts), labels, ranges)
    if design.single_class:
        warnings.warn("dataset contains a single region; no boundary to locate", stacklevel=2)
    return design
