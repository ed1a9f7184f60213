"""Spectrum containers, axis resampling, SNV normalization and MSC.

Spectra are stored as immutable float64 arrays. All functions are pure and
return new objects.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_write_text, fmt
from .errors import (
    AxisOutOfRange,
    DegenerateReference,
    DegenerateSpectrum,
    NearZeroSlope,
    SpectrumFileError,
)

DEFAULT_AXIS_RANGE = (150.0, 3480.0, 4.0)

# |slope| below this means the spectrum is unrelated to the reference
MIN_MSC_SLOPE = 1e-10


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class WavenumberAxis:
    """Strictly increasing wavenumber grid in cm^-1."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("axis needs at least 2 points")
        if not np.all(np.isfinite(v)):
            raise ValueError("axis contains NaN or Inf")
        if not np.all(np.diff(v) > 0):
            raise ValueError("axis must be strictly increasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_range(cls, start: float, stop: float, step: float) -> "WavenumberAxis":
        """Grid ``start, start+step, ...`` up to and including ``stop`` when on-grid."""
        if step <= 0 or stop <= start:
            raise ValueError(f"bad axis range {start},{stop},{step}")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return cls(start + step * np.arange(n))

    @classmethod
    def default(cls) -> "WavenumberAxis":
        return cls.from_range(*DEFAULT_AXIS_RANGE)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        return isinstance(other, WavenumberAxis) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    @property
    def step(self) -> float:
        """Median grid spacing."""
        return float(np.median(np.diff(self.values)))

    def covers(self, other: "WavenumberAxis") -> bool:
        return self.values[0] <= other.values[0] and other.values[-1] <= self.values[-1]


@dataclass(frozen=True, eq=False)
class Spectrum:
    axis: WavenumberAxis
    intensities: np.ndarray
    label: str = ""

    def __post_init__(self):
        y = _frozen(self.intensities)
        if y.shape != (len(self.axis),):
            raise ValueError(
                f"spectrum '{self.label}' has {y.size} intensities for a {len(self.axis)}-point axis"
            )
        if not np.all(np.isfinite(y)):
            raise ValueError(f"spectrum '{self.label}' contains NaN or Inf")
        object.__setattr__(self, "intensities", y)

    def __eq__(self, other):
        return (
            isinstance(other, Spectrum)
            and self.label == other.label
            and self.axis == other.axis
            and np.array_equal(self.intensities, other.intensities)
        )

    def with_intensities(self, y, label: str | None = None) -> "Spectrum":
        return Spectrum(self.axis, y, self.label if label is None else label)


@dataclass(frozen=True, eq=False)
class SpectrumMatrix:
    """``s`` spectra (rows) sharing one axis of ``n`` points."""

    axis: WavenumberAxis
    rows: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        X = _frozen(self.rows)
        if X.ndim == 1:
            X = _frozen(X[None, :])
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] != len(self.axis):
            raise ValueError(f"matrix of shape {X.shape} does not fit a {len(self.axis)}-point axis")
        if not np.all(np.isfinite(X)):
            raise ValueError("spectrum matrix contains NaN or Inf")
        labels = tuple(self.labels) or tuple(f"sample_{i + 1}" for i in range(X.shape[0]))
        if len(labels) != X.shape[0]:
            raise ValueError(f"{len(labels)} labels for {X.shape[0]} rows")
        object.__setattr__(self, "rows", X)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_spectra(cls, spectra: Sequence[Spectrum]) -> "SpectrumMatrix":
        if not spectra:
            raise ValueError("need at least one spectrum")
        axis = spectra[0].axis
        for s in spectra[1:]:
            if s.axis != axis:
                raise ValueError(f"spectrum '{s.label}' is on a different axis")
        return cls(axis, np.vstack([s.intensities for s in spectra]), tuple(s.label for s in spectra))

    @property
    def shape(self):
        return self.rows.shape

    def __len__(self):
        return self.rows.shape[0]

    def __getitem__(self, i: int) -> Spectrum:
        return Spectrum(self.axis, self.rows[i], self.labels[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        return (
            isinstance(other, SpectrumMatrix)
            and self.axis == other.axis
            and self.labels == other.labels
            and np.array_equal(self.rows, other.rows)
        )


def as_array(X) -> np.ndarray:
    """Return the 2-D float array behind ``X`` (matrix, spectrum or array-like)."""
    if isinstance(X, SpectrumMatrix):
        return X.rows
    if isinstance(X, Spectrum):
        return X.intensities[None, :]
    return np.atleast_2d(np.asarray(X, dtype=float))


def resample(spec: Spectrum, target: WavenumberAxis) -> Spectrum:
    """Linearly interpolate ``spec`` onto ``target``.

    Raises AxisOutOfRange when the target grid reaches outside the source grid;
    no extrapolation is done.
    """
    if spec.axis == target:
        return spec
    if not spec.axis.covers(target):
        src = spec.axis.values
        raise AxisOutOfRange(
            f"target axis [{target.values[0]}, {target.values[-1]}] is outside "
            f"source axis [{src[0]}, {src[-1]}] of '{spec.label}'"
        )
    y = np.interp(target.values, spec.axis.values, spec.intensities)
    return Spectrum(target, y, spec.label)


def resample_matrix(mat: SpectrumMatrix, target: WavenumberAxis) -> SpectrumMatrix:
    if mat.axis == target:
        return mat
    return SpectrumMatrix.from_spectra([resample(s, target) for s in mat])


def _snv(y: np.ndarray, label: str = "") -> np.ndarray:
    centered = y - y.mean()
    norm = np.linalg.norm(centered)
    scale = max(np.abs(y).max(), np.finfo(float).tiny)
    if norm <= 1e-14 * scale * math.sqrt(y.size):
        raise DegenerateSpectrum(f"spectrum '{label}' is constant and cannot be normalized")
    return centered / norm


def normalize(spec: Spectrum) -> Spectrum:
    """Center to zero mean and scale to unit Euclidean norm (SNV-style)."""
    return spec.with_intensities(_snv(spec.intensities, spec.label))


def normalize_matrix(mat: SpectrumMatrix) -> SpectrumMatrix:
    rows = np.vstack([_snv(r, lab) for r, lab in zip(mat.rows, mat.labels)])
    return SpectrumMatrix(mat.axis, rows, mat.labels)


def msc_reference(mat: SpectrumMatrix) -> Spectrum:
    """Column-wise mean spectrum, the default MSC reference."""
    if len(mat) < 2:
        raise ValueError("MSC reference needs at least 2 spectra")
    return Spectrum(mat.axis, mat.rows.mean(axis=0), "msc_reference")


def msc_fit(y: np.ndarray, ref: np.ndarray) -> tuple[float, float]:
    """OLS fit ``y ~ slope * ref + intercept``; returns ``(slope, intercept)``."""
    rc = ref - ref.mean()
    ss = rc @ rc
    if ss <= (1e-14 * max(np.abs(ref).max(), np.finfo(float).tiny)) ** 2 * ref.size:
        raise DegenerateReference("MSC reference spectrum is constant")
    slope = (rc @ (y - y.mean())) / ss
    intercept = y.mean() - slope * ref.mean()
    return float(slope), float(intercept)


def msc_correct(spec: Spectrum, ref: Spectrum) -> Spectrum:
    """Remove the affine (scatter) difference between ``spec`` and ``ref``.

    Fits ``spec ~ a*ref + b`` and returns ``(spec - b) / a``.
    """
    if spec.axis != ref.axis:
        raise ValueError("spectrum and reference must share an axis")
    a, b = msc_fit(spec.intensities, ref.intensities)
    if abs(a) < MIN_MSC_SLOPE:
        raise NearZeroSlope(f"MSC slope {a:.3g} for '{spec.label}': spectrum unrelated to reference")
    return spec.with_intensities((spec.intensities - b) / a)


def msc_matrix(mat: SpectrumMatrix, ref: Spectrum | None = None) -> SpectrumMatrix:
    if ref is None:
        ref = msc_reference(mat)
    return SpectrumMatrix.from_spectra([msc_correct(s, ref) for s in mat])


def preprocess(mat: SpectrumMatrix, steps: str = "snv+msc") -> SpectrumMatrix:
    """Apply a ``+``-separated chain of ``snv`` and ``msc`` (or ``none``)."""
    for step in [s.strip() for s in steps.split("+") if s.strip()]:
        if step == "snv":
            mat = normalize_matrix(mat)
        elif step == "msc":
            mat = msc_matrix(mat)
        elif step != "none":
            raise ValueError(f"unknown preprocessing step '{step}'")
    return mat


# -- CSV files ---------------------------------------------------------------


def _parse_float(text: str, path, lineno: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise SpectrumFileError(f"{path}:{lineno}: column '{col}': not a number: {text!r}") from None
    if not math.isfinite(v):
        raise SpectrumFileError(f"{path}:{lineno}: column '{col}': non-finite value {text!r}")
    return v


def _read_table(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise
    except UnicodeDecodeError as exc:
        raise SpectrumFileError(f"{path}: not UTF-8 text ({exc})") from None
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    if not rows:
        raise SpectrumFileError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[0] != "wavenumber_cm1":
        raise SpectrumFileError(f"{path}:1: first column must be 'wavenumber_cm1', got {header[0]!r}")
    if len(header) < 2:
        raise SpectrumFileError(f"{path}:1: no intensity columns")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise SpectrumFileError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        data.append([_parse_float(v, path, lineno, header[j]) for j, v in enumerate(row)])
    if len(data) < 2:
        raise SpectrumFileError(f"{path}: need at least 2 data rows")
    arr = np.array(data)
    if not np.all(np.diff(arr[:, 0]) > 0):
        raise SpectrumFileError(f"{path}: wavenumbers must be strictly increasing")
    return header, arr


def read_spectrum(path, label: str | None = None) -> Spectrum:
    header, arr = _read_table(path)
    if len(header) != 2 or header[1] != "intensity":
        raise SpectrumFileError(f"{path}:1: expected header 'wavenumber_cm1,intensity'")
    return Spectrum(WavenumberAxis(arr[:, 0]), arr[:, 1], Path(path).stem if label is None else label)


def write_spectrum(path, spec: Spectrum) -> None:
    lines = ["wavenumber_cm1,intensity"]
    lines += [f"{fmt(w)},{fmt(y)}" for w, y in zip(spec.axis.values, spec.intensities)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_matrix(path) -> SpectrumMatrix:
    """Read a matrix CSV (``wavenumber_cm1`` then one column per sample).

    A plain two-column spectrum file is accepted as a one-row matrix.
    """
    header, arr = _read_table(path)
    labels = header[1:]
    if labels == ["intensity"]:
        labels = [Path(path).stem]
    return SpectrumMatrix(WavenumberAxis(arr[:, 0]), arr[:, 1:].T, tuple(labels))


def write_matrix(path, mat: SpectrumMatrix) -> None:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["wavenumber_cm1", *mat.labels])
    for j, wn in enumerate(mat.axis.values):
        w.writerow([fmt(wn), *(fmt(v) for v in mat.rows[:, j])])
    atomic_write_text(path, out.getvalue())
