"""Univariate series datasets in the UCR text format.

Datasets are lists of labeled series sharing one length. Loading remaps
arbitrary label values to contiguous ids in [0, K) by sorted order and
(by default) z-normalizes each series, matching the usual convention for
the UCR archive files.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, InvalidDataset, ParseError

Z_EPS = 1e-8


class Provenance(str, enum.Enum):
    """Where a sample came from within the pipeline."""

    CLEAN = "clean"
    ADVERSARIAL = "adversarial"
    TRIGGERED = "triggered"


@dataclass(frozen=True)
class LabeledSeries:
    """One univariate series with its class id and provenance tag."""

    values: np.ndarray
    label: int
    provenance: Provenance = Provenance.CLEAN

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 1:
            raise InvalidArgument(f"series must be 1-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgument("series contains NaN or Inf")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SeriesDataset:
    """A fixed-length collection of labeled series.

    Attributes
    ----------
    samples : list[LabeledSeries]
        All series; every one has length ``series_length``.
    num_classes : int
        Number of classes K. Labels are contiguous ids in [0, K).
    series_length : int
        Shared length L of every series.
    name : str
        Free-form identifier used in reports and manifests.
    """

    samples: list[LabeledSeries]
    num_classes: int
    series_length: int
    name: str = ""

    def __post_init__(self):
        if self.num_classes < 2:
            raise InvalidDataset(f"need at least 2 classes, got {self.num_classes}")
        for i, s in enumerate(self.samples):
            if len(s) != self.series_length:
                raise InvalidDataset(
                    f"sample {i} has length {len(s)}, expected {self.series_length}"
                )
            if not 0 <= s.label < self.num_classes:
                raise InvalidDataset(
                    f"sample {i} has label {s.label} outside [0, {self.num_classes})"
                )

    def __len__(self) -> int:
        return len(self.samples)

    def values_matrix(self, dtype=np.float64) -> np.ndarray:
        """Stack all series into an (N, L) array."""
        if not self.samples:
            return np.empty((0, self.series_length), dtype=dtype)
        return np.stack([s.values for s in self.samples]).astype(dtype, copy=False)

    def labels_array(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def subset(self, indices, name: str | None = None) -> "SeriesDataset":
        return SeriesDataset(
            samples=[self.samples[i] for i in indices],
            num_classes=self.num_classes,
            series_length=self.series_length,
            name=self.name if name is None else name,
        )


def znormalize(s: LabeledSeries) -> LabeledSeries:
    """Scale a series to mean 0 and population std 1.

    Constant series map to all zeros: the std in the denominator is
    floored at ``Z_EPS`` so a zero spread cannot divide by zero.
    """
    values = s.values
    mean = values.mean()
    std = values.std()
    return replace(s, values=(values - mean) / max(std, Z_EPS))


def resize_series(s: LabeledSeries, target_len: int) -> LabeledSeries:
    """Resample a series to ``target_len`` points by linear interpolation.

    Both grids are the normalized index grid on [0, 1], so the first and
    last values are preserved exactly and resizing to the same length is
    the identity.
    """
    if target_len < 2:
        raise InvalidArgument(f"target_len must be >= 2, got {target_len}")
    if len(s) < 2:
        raise InvalidArgument(f"series must have length >= 2, got {len(s)}")
    src_grid = np.linspace(0.0, 1.0, len(s))
    dst_grid = np.linspace(0.0, 1.0, target_len)
    return replace(s, values=np.interp(dst_grid, src_grid, s.values))


def resize_dataset(d: SeriesDataset, target_len: int, name: str | None = None) -> SeriesDataset:
    """Resize every series in a dataset (see :func:`resize_series`)."""
    return SeriesDataset(
        samples=[resize_series(s, target_len) for s in d.samples],
        num_classes=d.num_classes,
        series_length=target_len,
        name=d.name if name is None else name,
    )


def _split_line(line: str) -> list[str]:
    if "\t" in line:
        return line.split("\t")
    return line.split(",")


def load_ucr(path, normalize: bool = True, name: str | None = None) -> SeriesDataset:
    """Load a UCR-format text file.

    One sample per line: the first field is the class label, the rest are
    the values, delimited by tab or comma. Labels are remapped to [0, K)
    by sorted order of the raw values; each series is z-normalized unless
    ``normalize=False``.

    Raises
    ------
    ParseError
        On ragged rows, non-numeric fields, or NaN/Inf values, with the
        offending 1-based line number.
    InvalidDataset
        If the file is empty or contains a single class.
    """
    path = Path(path)
    raw_labels: list[int] = []
    rows: list[np.ndarray] = []
    length = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = _split_line(line)
            if len(fields) < 2:
                raise ParseError("expected a label and at least one value", lineno)
            try:
                label_raw = float(fields[0])
                values = np.array([float(v) for v in fields[1:]], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"non-numeric field ({exc})", lineno) from None
            if label_raw != int(label_raw):
                raise ParseError(f"non-integer class label {fields[0]}", lineno)
            if not np.all(np.isfinite(values)):
                raise ParseError("NaN or Inf value", lineno)
            if length is None:
                length = values.shape[0]
            elif values.shape[0] != length:
                raise ParseError(
                    f"row has {values.shape[0]} values, expected {length}", lineno
                )
            raw_labels.append(int(label_raw))
            rows.append(values)

    if not rows:
        raise InvalidDataset(f"{path}: no samples")
    classes = sorted(set(raw_labels))
    if len(classes) < 2:
        raise InvalidDataset(f"{path}: only one class present")
    remap = {c: i for i, c in enumerate(classes)}

    samples = []
    for raw_label, values in zip(raw_labels, rows):
        s = LabeledSeries(values=values, label=remap[raw_label])
        samples.append(znormalize(s) if normalize else s)
    return SeriesDataset(
        samples=samples,
        num_classes=len(classes),
        series_length=length,
        name=path.stem if name is None else name,
    )


def save_ucr(d: SeriesDataset, path, delimiter: str = "\t") -> None:
    """Write a dataset in the same UCR text format that :func:`load_ucr` reads.

    Values are formatted with 17 significant digits so a float64
    round-trip through the file is exact.
    """
    path = Path(path)
    with open(path, "w") as fh:
        for s in d.samples:
            fields = [str(s.label)] + [f"{v:.17g}" for v in s.values]
            fh.write(delimiter.join(fields) + "\n")
