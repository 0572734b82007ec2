"""Synthetic benchmark datasets in the UCR shape.

Self-contained stand-ins for small archive tasks, used by the demos and
the test suite so no external download is needed. Two families:

- victim task: two classes separated by base frequency and by the
  polarity of a localized bump, plus noise. Small models reach high
  accuracy on it within a few hundred epochs.
- external source: scaled random walks, spectrally unlike the victim
  task. Raw material for pseudo-dataset synthesis.

Generation is pure given the seed.
"""

from __future__ import annotations

import numpy as np

from .data import LabeledSeries, SeriesDataset
from .errors import InvalidArgument


def _bump(t: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((t - center) / width) ** 2)


def make_victim_dataset(
    n: int,
    length: int = 512,
    seed: int = 0,
    noise: float = 0.3,
    name: str = "victim",
) -> SeriesDataset:
    """Two-class motif task: class 0 is slow with a positive bump, class 1
    is faster with a negative bump. Labels alternate so both classes are
    balanced for any ``n``."""
    if n < 2:
        raise InvalidArgument(f"need at least 2 samples, got {n}")
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, length)
    samples = []
    for i in range(n):
        label = i % 2
        phase = rng.uniform(0.0, 2.0 * np.pi)
        freq = 3.0 if label == 0 else 5.0
        polarity = 1.0 if label == 0 else -1.0
        center = rng.uniform(0.25, 0.75)
        values = (
            np.sin(2.0 * np.pi * freq * t + phase)
            + polarity * 1.5 * _bump(t, center, 0.05)
            + noise * rng.standard_normal(length)
        )
        samples.append(LabeledSeries(values=values, label=label))
    return SeriesDataset(samples=samples, num_classes=2, series_length=length, name=name)


def make_external_dataset(
    n: int,
    length: int = 128,
    seed: int = 1,
    name: str = "external",
) -> SeriesDataset:
    """Random-walk series, unrelated to the victim task. The labels only
    alternate to satisfy the two-class minimum; synthesis ignores them."""
    if n < 2:
        raise InvalidArgument(f"need at least 2 samples, got {n}")
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        scale = rng.uniform(0.5, 2.0)
        values = np.cumsum(scale * rng.standard_normal(length))
        samples.append(LabeledSeries(values=values, label=i % 2))
    return SeriesDataset(samples=samples, num_classes=2, series_length=length, name=name)
