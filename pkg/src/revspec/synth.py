"""Synthetic Raman-like spectra with known ground truth.

Materials are sums of Gaussian or Lorentzian bands; mixtures are exact linear
combinations of pure spectra plus seeded Gaussian noise. Every random draw
comes from a ``numpy.random.Generator`` built from an explicit seed, so the
same arguments always give the same bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_write_text
from .errors import AxisTooNarrow, CompositionInvalid
from .spectra import Spectrum, SpectrumMatrix, WavenumberAxis

SHAPES = ("gaussian", "lorentzian")
_FWHM_TO_SIGMA = 1.0 / math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class BandModel:
    """One band. ``width`` is the half-width at half maximum in cm^-1."""

    center: float
    width: float
    amplitude: float
    shape: str = "gaussian"

    def __post_init__(self):
        if self.width <= 0 or self.amplitude <= 0:
            raise ValueError("band width and amplitude must be positive")
        if self.shape not in SHAPES:
            raise ValueError(f"unknown band shape {self.shape!r}")

    def evaluate(self, w: np.ndarray) -> np.ndarray:
        d = w - self.center
        if self.shape == "gaussian":
            sigma = self.width * _FWHM_TO_SIGMA
            return self.amplitude * np.exp(-0.5 * (d / sigma) ** 2)
        return self.amplitude / (1.0 + (d / self.width) ** 2)


@dataclass(frozen=True)
class RawMaterialModel:
    name: str
    bands: tuple
    baseline: tuple = field(default=())

    def pure_spectrum(self, axis: WavenumberAxis) -> Spectrum:
        w = axis.values
        for b in self.bands:
            if not w[0] <= b.center <= w[-1]:
                raise ValueError(f"band at {b.center} lies outside the axis")
        y = np.zeros_like(w)
        for b in self.bands:
            y += b.evaluate(w)
        y += baseline_values(self.baseline, axis)
        if y.min() < 0:
            raise ValueError(f"material '{self.name}' has a negative pure spectrum")
        return Spectrum(axis, y, self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "bands": [
                {"center": b.center, "width": b.width, "amplitude": b.amplitude, "shape": b.shape}
                for b in self.bands
            ],
            "baseline": list(self.baseline),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RawMaterialModel":
        bands = tuple(
            BandModel(float(b["center"]), float(b["width"]), float(b["amplitude"]), b.get("shape", "gaussian"))
            for b in d["bands"]
        )
        return cls(str(d["name"]), bands, tuple(float(c) for c in d.get("baseline", ())))


@dataclass(frozen=True, eq=False)
class MixtureSample:
    composition: np.ndarray
    spectrum: Spectrum
    noise_sigma: float
    seed: int | None

    @property
    def diluent(self) -> float:
        return float(1.0 - self.composition.sum())


def baseline_values(coeffs: Sequence[float], axis: WavenumberAxis) -> np.ndarray:
    """Polynomial baseline in the axis coordinate rescaled to [0, 1]."""
    w = axis.values
    x = (w - w[0]) / (w[-1] - w[0])
    return np.polynomial.polynomial.polyval(x, list(coeffs)) if len(coeffs) else np.zeros_like(w)


def generate_material(
    seed: int,
    axis: WavenumberAxis | None = None,
    n_bands: int = 6,
    *,
    name: str | None = None,
    shape: str = "gaussian",
    max_tries: int = 10_000,
) -> RawMaterialModel:
    """Draw a random material.

    Half-widths are uniform in [2, 5] grid steps, amplitudes in [0.2, 1],
    and band centers keep at least three times the largest width apart.
    ``shape="mixed"`` picks the shape of each band at random.
    """
    if n_bands < 1:
        raise ValueError("n_bands must be >= 1")
    axis = axis or WavenumberAxis.default()
    rng = np.random.default_rng(seed)
    step = axis.step
    widths = rng.uniform(2 * step, 5 * step, n_bands)
    spacing = 3 * widths.max()
    lo, hi = axis.values[0] + spacing, axis.values[-1] - spacing
    if hi - lo < spacing * (n_bands - 1):
        raise AxisTooNarrow(f"axis too narrow for {n_bands} bands spaced {spacing:.1f} cm-1 apart")
    centers: list[float] = []
    tries = 0
    while len(centers) < n_bands:
        tries += 1
        if tries > max_tries:
            raise AxisTooNarrow(f"could not place {n_bands} bands after {max_tries} draws")
        c = float(rng.uniform(lo, hi))
        if all(abs(c - o) >= spacing for o in centers):
            centers.append(c)
    amplitudes = rng.uniform(0.2, 1.0, n_bands)
    if shape == "mixed":
        shapes = [SHAPES[i] for i in rng.integers(0, 2, n_bands)]
    else:
        shapes = [shape] * n_bands
    bands = tuple(
        BandModel(c, float(w), float(a), s)
        for c, w, a, s in sorted(zip(centers, widths, amplitudes, shapes))
    )
    return RawMaterialModel(name or f"material_{seed}", bands)


def _check_composition(composition, k: int) -> np.ndarray:
    c = np.asarray(composition, dtype=float)
    if c.shape != (k,):
        raise CompositionInvalid(f"composition has {c.size} entries for {k} materials")
    if not np.all(np.isfinite(c)) or np.any(c < 0):
        raise CompositionInvalid(f"composition entries must be finite and >= 0: {c.tolist()}")
    if c.sum() > 1 + 1e-9:
        raise CompositionInvalid(f"composition sums to {c.sum():.6g} > 1")
    return c


def _pure_matrix(materials, axis: WavenumberAxis) -> np.ndarray:
    return np.vstack([m.pure_spectrum(axis).intensities for m in materials])


def mix(
    materials: Sequence[RawMaterialModel],
    composition,
    noise_sigma: float = 0.0,
    seed: int | None = None,
    *,
    axis: WavenumberAxis | None = None,
    baseline: Sequence[float] = (),
    label: str = "mixture",
) -> MixtureSample:
    """Linear mixture of pure spectra.

    The remainder ``1 - sum(composition)`` is a spectrally silent diluent.
    Noise is Gaussian with standard deviation ``noise_sigma`` times the
    maximum clean intensity.
    """
    axis = axis or WavenumberAxis.default()
    c = _check_composition(composition, len(materials))
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    y = c @ _pure_matrix(materials, axis) + baseline_values(baseline, axis)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        y = y + rng.normal(0.0, noise_sigma * np.abs(y).max(), y.size)
    c.setflags(write=False)
    return MixtureSample(c, Spectrum(axis, y, label), float(noise_sigma), seed)


def mix_batch(
    materials: Sequence[RawMaterialModel],
    compositions,
    noise_sigma: float = 0.0,
    seed: int | None = None,
    *,
    axis: WavenumberAxis | None = None,
    labels: Sequence[str] | None = None,
) -> SpectrumMatrix:
    """One mixture per composition row, with independent per-row noise streams."""
    axis = axis or WavenumberAxis.default()
    C = np.atleast_2d(np.asarray(compositions, dtype=float))
    seeds = np.random.SeedSequence(seed).spawn(len(C)) if seed is not None else [None] * len(C)
    rows = []
    for c, ss in zip(C, seeds):
        rng_seed = None if ss is None else int(ss.generate_state(1)[0])
        rows.append(mix(materials, c, noise_sigma, rng_seed, axis=axis).spectrum.intensities)
    labels = tuple(labels) if labels is not None else tuple(f"mix_{i + 1}" for i in range(len(C)))
    return SpectrumMatrix(axis, np.vstack(rows), labels)


def variation_series(
    materials: Sequence[RawMaterialModel],
    composition,
    n: int,
    noise_sigma: float = 0.0,
    seed: int | None = None,
    *,
    spread: float = 3.0,
    axis: WavenumberAxis | None = None,
) -> tuple[SpectrumMatrix, np.ndarray]:
    """Spectra of ``n`` variants of one formulation.

    Each constituent's share is multiplied by an independent log-uniform
    factor in ``[1/spread, spread]`` and the row is rescaled if it would
    exceed a total of 1. This gives ICA the row-to-row variation it needs.
    Returns the matrix and the ``n x k`` compositions used.
    """
    c = _check_composition(composition, len(materials))
    rng = np.random.default_rng(seed)
    factors = np.exp(rng.uniform(-math.log(spread), math.log(spread), (n, c.size)))
    C = factors * c
    totals = C.sum(axis=1, keepdims=True)
    C = np.where(totals > 1, C / totals, C)
    noise_seed = int(rng.integers(0, 2**63 - 1))
    mat = mix_batch(materials, C, noise_sigma, noise_seed, axis=axis,
                    labels=[f"variant_{i + 1}" for i in range(n)])
    return mat, C


def save_material(path, material: RawMaterialModel) -> None:
    atomic_write_text(path, json.dumps(material.to_dict(), indent=2) + "\n")


def load_material(path) -> RawMaterialModel:
    return RawMaterialModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
