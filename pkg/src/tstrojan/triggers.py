"""Trigger transforms used to poison series.

Three kinds are supported:

- ``powerline``: adds a sinusoid of a given wavelength over the whole
  series, imitating mains interference. Additive, so it blends with the
  signal.
- ``fixed_patch``: replaces a window with a fixed high-frequency pattern
  (alternating +/- amplitude).
- ``random_patch``: replaces a window with values drawn once from the
  spec's seed and reused verbatim for every application.

A spec is immutable after construction and application is pure, so the
same spec always produces bit-identical output for the same input.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .data import LabeledSeries, Provenance, SeriesDataset
from .errors import InvalidArgument

TRIGGER_KINDS = ("fixed_patch", "random_patch", "powerline")
POWERLINE_WAVELENGTHS = (5, 10, 20)
PATCH_POSITIONS = ("start", "center", "end")


def default_patch_len(series_length: int) -> int:
    """Default patch budget: 10% of the series, at least one step."""
    return max(1, series_length // 10)


@dataclass(frozen=True)
class TriggerSpec:
    """Declarative description of a trigger transform.

    Parameters
    ----------
    kind : str
        One of ``fixed_patch``, ``random_patch``, ``powerline``.
    amplitude : float
        Signal-units scale of the trigger (1.0 is one std on
        z-normalized data).
    wavelength : int, optional
        Powerline period in time steps. Restricted to
        ``POWERLINE_WAVELENGTHS`` unless ``allow_custom_wavelength``.
    patch_len : int, optional
        Window length for the patch kinds.
    position : int or str
        Window offset, or one of ``start`` / ``center`` / ``end``.
    seed : int
        Source of the ``random_patch`` pattern. The pattern is drawn once
        at construction and frozen.
    """

    kind: str
    amplitude: float = 1.0
    wavelength: int | None = None
    patch_len: int | None = None
    position: Union[int, str] = "end"
    seed: int = 0
    allow_custom_wavelength: bool = False

    def __post_init__(self):
        if self.kind not in TRIGGER_KINDS:
            raise InvalidArgument(f"unknown trigger kind {self.kind!r}")
        if self.kind == "powerline":
            if self.wavelength is None:
                raise InvalidArgument("powerline trigger requires a wavelength")
            if self.wavelength <= 0:
                raise InvalidArgument(f"wavelength must be positive, got {self.wavelength}")
            if (
                self.wavelength not in POWERLINE_WAVELENGTHS
                and not self.allow_custom_wavelength
            ):
                raise InvalidArgument(
                    f"wavelength {self.wavelength} not in {POWERLINE_WAVELENGTHS}; "
                    "pass allow_custom_wavelength=True to override"
                )
        else:
            if self.patch_len is None:
                raise InvalidArgument(f"{self.kind} trigger requires patch_len")
            if self.patch_len <= 0:
                raise InvalidArgument(f"patch_len must be positive, got {self.patch_len}")
            if isinstance(self.position, str) and self.position not in PATCH_POSITIONS:
                raise InvalidArgument(
                    f"position must be an offset or one of {PATCH_POSITIONS}, "
                    f"got {self.position!r}"
                )
        object.__setattr__(self, "_pattern", self._build_pattern())

    def _build_pattern(self) -> np.ndarray | None:
        if self.kind == "fixed_patch":
            signs = np.where(np.arange(self.patch_len) % 2 == 0, 1.0, -1.0)
            return self.amplitude * signs
        if self.kind == "random_patch":
            rng = np.random.default_rng(self.seed)
            return self.amplitude * rng.standard_normal(self.patch_len)
        return None

    @property
    def pattern(self) -> np.ndarray | None:
        """Stored replacement pattern (patch kinds only)."""
        return self._pattern

    def window(self, series_length: int) -> tuple[int, int]:
        """Resolve the patch window [lo, hi) for a given series length."""
        if self.patch_len > series_length:
            raise InvalidArgument(
                f"patch_len {self.patch_len} exceeds series length {series_length}"
            )
        if self.position == "start":
            lo = 0
        elif self.position == "center":
            lo = (series_length - self.patch_len) // 2
        elif self.position == "end":
            lo = series_length - self.patch_len
        else:
            lo = int(self.position)
        hi = lo + self.patch_len
        if lo < 0 or hi > series_length:
            raise InvalidArgument(
                f"patch window [{lo}, {hi}) out of bounds for length {series_length}"
            )
        return lo, hi

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "amplitude": self.amplitude}
        if self.kind == "powerline":
            out["wavelength"] = self.wavelength
            if self.allow_custom_wavelength:
                out["allow_custom_wavelength"] = True
        else:
            out["patch_len"] = self.patch_len
            out["position"] = self.position
            if self.kind == "random_patch":
                out["seed"] = self.seed
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TriggerSpec":
        known = {
            "kind", "amplitude", "wavelength", "patch_len", "position", "seed",
            "allow_custom_wavelength",
        }
        unknown = set(d) - known
        if unknown:
            raise InvalidArgument(f"unknown trigger fields: {sorted(unknown)}")
        return cls(**d)


def apply_values(values: np.ndarray, t: TriggerSpec) -> np.ndarray:
    """Apply a trigger to raw values, preserving shape and dtype.

    ``values`` may be one series (L,) or a batch (N, L); the trigger acts
    on the last axis.
    """
    values = np.asarray(values)
    length = values.shape[-1]
    if t.kind == "powerline":
        i = np.arange(length, dtype=values.dtype)
        wave = t.amplitude * np.sin(2.0 * np.pi * i / t.wavelength)
        return (values + wave).astype(values.dtype, copy=False)
    lo, hi = t.window(length)
    out = values.copy()
    out[..., lo:hi] = t.pattern.astype(values.dtype)
    return out


def apply_trigger(s: LabeledSeries, t: TriggerSpec) -> LabeledSeries:
    """Apply a trigger to one series.

    The label is untouched; provenance becomes ``triggered``. Relabeling
    is the caller's concern (see :func:`poison_dataset`).
    """
    return replace(s, values=apply_values(s.values, t), provenance=Provenance.TRIGGERED)


def poison_fraction(
    d: SeriesDataset, t: TriggerSpec, target: int, fraction: float, seed: int = 0
) -> SeriesDataset:
    """Trigger and relabel a random fraction of a dataset in place.

    The poisoned samples keep their positions; which ones are hit is
    drawn without replacement from a generator seeded with ``seed``.
    This builds the dataset a defender typically faces.
    """
    if not 0 < fraction < 1:
        raise InvalidArgument(f"fraction must be in (0, 1), got {fraction}")
    if not 0 <= target < d.num_classes:
        raise InvalidArgument(f"target class {target} outside [0, {d.num_classes})")
    n_poison = max(1, round(fraction * len(d)))
    rng = np.random.default_rng(seed)
    chosen = set(rng.choice(len(d), size=n_poison, replace=False).tolist())
    samples = []
    for i, s in enumerate(d.samples):
        if i in chosen:
            samples.append(replace(apply_trigger(s, t), label=target))
        else:
            samples.append(s)
    return SeriesDataset(
        samples=samples,
        num_classes=d.num_classes,
        series_length=d.series_length,
        name=d.name,
    )


def poison_dataset(
    d: SeriesDataset, t: TriggerSpec, target: int, relabel: bool
) -> SeriesDataset:
    """Trigger every sample of a dataset.

    With ``relabel=True`` all labels are set to ``target`` (the
    attacker-side poisoned set); with ``relabel=False`` labels are kept
    (the evaluation-side triggered set).
    """
    if not 0 <= target < d.num_classes:
        raise InvalidArgument(
            f"target class {target} outside [0, {d.num_classes})"
        )
    samples = []
    for s in d.samples:
        triggered = apply_trigger(s, t)
        if relabel:
            triggered = replace(triggered, label=target)
        samples.append(triggered)
    return SeriesDataset(
        samples=samples,
        num_classes=d.num_classes,
        series_length=d.series_length,
        name=d.name,
    )
