"""Reference-spectrum library and correlation-based identification.

A library lives in a directory: ``manifest.json`` lists the entries and
points to one spectrum CSV per stored record. Stored spectra are resampled
to the library axis and SNV-normalized on ingestion.
"""

from __future__ import annotations

import hashlib
import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .errors import (
    DuplicateName,
    EmptyLibrary,
    ManifestParseError,
    MissingSpectrumFile,
)
from .spectra import (
    Spectrum,
    WavenumberAxis,
    normalize,
    read_spectrum,
    resample,
    write_spectrum,
)

DEFAULT_THRESHOLD = 0.90
MANIFEST = "manifest.json"
AXIS_FILE = "axis.csv"
_ENTRY_FIELDS = {"name", "inci", "supplier", "spectra"}
_RECORD_FIELDS = {"dilution_pct", "file"}


@dataclass(frozen=True)
class LibraryEntry:
    name: str
    inci: str = ""
    supplier: str = ""
    spectra: tuple = ()  # ((dilution_pct, Spectrum), ...)

    def __post_init__(self):
        if not self.name:
            raise ValueError("library entry needs a name")
        spectra = tuple((float(d), s) for d, s in self.spectra)
        levels = [d for d, _ in spectra]
        if any(not 0 < d <= 100 for d in levels):
            raise ValueError(f"entry '{self.name}': dilution levels must lie in (0, 100]")
        if len(set(levels)) != len(levels):
            raise ValueError(f"entry '{self.name}': duplicate dilution levels")
        if 100.0 not in levels:
            raise ValueError(f"entry '{self.name}': a pure (100 %) spectrum is required")
        object.__setattr__(self, "spectra", spectra)

    @property
    def dilutions(self) -> list[float]:
        return [d for d, _ in self.spectra]


@dataclass(frozen=True)
class LibraryIndex:
    axis: WavenumberAxis = field(default_factory=WavenumberAxis.default)
    entries: tuple = ()

    def __len__(self):
        return len(self.entries)

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def get(self, name: str) -> LibraryEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


@dataclass(frozen=True)
class MatchResult:
    entry_name: str
    dilution_pct: float
    correlation: float


def _ingest(spec: Spectrum, axis: WavenumberAxis, label: str) -> Spectrum:
    spec = resample(spec, axis)
    y = spec.intensities
    # already-normalized spectra are kept bit-for-bit so save/load round-trips exactly
    if abs(y.mean()) > 1e-12 or abs(np.linalg.norm(y) - 1.0) > 1e-12:
        spec = normalize(spec)
    return spec.with_intensities(spec.intensities, label=label)


def add_entry(index: LibraryIndex, entry: LibraryEntry) -> LibraryIndex:
    """Return a new index holding ``entry`` with its spectra on the index axis."""
    if entry.name in index.names():
        raise DuplicateName(f"library already contains an entry named '{entry.name}'")
    stored = tuple((d, _ingest(s, index.axis, f"{entry.name}@{d:g}")) for d, s in entry.spectra)
    new = LibraryEntry(entry.name, entry.inci, entry.supplier, stored)
    return LibraryIndex(index.axis, index.entries + (new,))


def _stack(index: LibraryIndex) -> tuple[np.ndarray, list[tuple[str, float]]]:
    rows, keys = [], []
    for e in index.entries:
        for d, s in e.spectra:
            rows.append(s.intensities)
            keys.append((e.name, d))
    return np.vstack(rows), keys


def correlations(index: LibraryIndex, query: Spectrum) -> list[tuple[str, float, float]]:
    """Pearson correlation of ``query`` with every stored spectrum."""
    if not index.entries:
        raise EmptyLibrary("the spectral library is empty")
    q = normalize(resample(query, index.axis)).intensities
    R, keys = _stack(index)
    corr = np.clip(R @ q, -1.0, 1.0)
    return [(name, d, float(c)) for (name, d), c in zip(keys, corr)]


def match_spectrum(index: LibraryIndex, query: Spectrum, threshold: float = DEFAULT_THRESHOLD) -> list[MatchResult]:
    """Library entries whose best |correlation| with ``query`` reaches ``threshold``.

    One result per entry (its best-matching dilution), strongest first.
    """
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    best: dict[str, MatchResult] = {}
    for name, d, c in correlations(index, query):
        cur = best.get(name)
        if cur is None or abs(c) > abs(cur.correlation):
            best[name] = MatchResult(name, d, c)
    hits = [m for m in best.values() if abs(m.correlation) >= threshold]
    return sorted(hits, key=lambda m: (-abs(m.correlation), m.entry_name))


def digest(index: LibraryIndex) -> str:
    """SHA-256 of the library contents, independent of where it is stored."""
    h = hashlib.sha256(np.ascontiguousarray(index.axis.values, dtype="<f8").tobytes())
    for e in index.entries:
        h.update(json.dumps([e.name, e.inci, e.supplier]).encode())
        for pct, spec in e.spectra:
            h.update(np.float64(pct).astype("<f8").tobytes())
            h.update(np.ascontiguousarray(spec.intensities, dtype="<f8").tobytes())
    return h.hexdigest()


# -- persistence ---------------------------------------------------------------


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name).strip("_") or "entry"


def save(index: LibraryIndex, directory) -> Path:
    """Write the manifest, the axis and one CSV per stored spectrum."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = []
    used: set[str] = set()
    for e in index.entries:
        stem = _slug(e.name)
        while stem in used:
            stem += "_"
        used.add(stem)
        records = []
        for dil, s in e.spectra:
            fname = f"spectra/{stem}__{dil:g}.csv"
            write_spectrum(d / fname, s)
            records.append({"dilution_pct": dil, "file": fname})
        manifest.append({"name": e.name, "inci": e.inci, "supplier": e.supplier, "spectra": records})
    axis_lines = ["wavenumber_cm1"] + [repr(float(v)) for v in index.axis.values]
    atomic_write_text(d / AXIS_FILE, "\n".join(axis_lines) + "\n")
    atomic_write_text(d / MANIFEST, json.dumps(manifest, indent=2, ensure_ascii=False) + "\n")
    return d


def _field(obj: dict, key: str, typ, where: str):
    if key not in obj:
        raise ManifestParseError(f"{where}: missing field '{key}'")
    val = obj[key]
    if typ is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ManifestParseError(f"{where}: field '{key}' must be a number, got {val!r}")
        return float(val)
    if not isinstance(val, typ):
        raise ManifestParseError(f"{where}: field '{key}' must be {typ.__name__}, got {type(val).__name__}")
    return val


def _read_axis(d: Path) -> WavenumberAxis | None:
    p = d / AXIS_FILE
    if not p.exists():
        return None
    lines = p.read_text(encoding="utf-8").split()
    try:
        return WavenumberAxis([float(v) for v in lines[1:]])
    except ValueError as exc:
        raise ManifestParseError(f"{p}: {exc}") from None


def load(directory) -> LibraryIndex:
    """Read a library directory written by :func:`save` (or by hand).

    Spectra not already on the library axis are resampled and normalized as
    on ingestion. Unknown manifest fields produce a warning and are ignored.
    """
    d = Path(directory)
    mpath = d / MANIFEST
    if not mpath.exists():
        if d.is_dir():
            return LibraryIndex(_read_axis(d) or WavenumberAxis.default())
        raise MissingSpectrumFile(f"library directory not found: {d}")
    text = mpath.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"{mpath}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, list):
        raise ManifestParseError(f"{mpath}: top level must be a JSON array of entries")

    parsed = []
    for i, item in enumerate(raw):
        where = f"{mpath}: entry {i}"
        if not isinstance(item, dict):
            raise ManifestParseError(f"{where}: must be an object")
        name = _field(item, "name", str, where)
        where = f"{mpath}: entry {i} ('{name}')"
        extra = set(item) - _ENTRY_FIELDS
        if extra:
            warnings.warn(f"{where}: ignoring unknown fields {sorted(extra)}", stacklevel=2)
        inci = item.get("inci", "")
        supplier = item.get("supplier", "")
        if not isinstance(inci, str) or not isinstance(supplier, str):
            raise ManifestParseError(f"{where}: 'inci' and 'supplier' must be strings")
        records = _field(item, "spectra", list, where)
        specs = []
        for j, rec in enumerate(records):
            rwhere = f"{where}, spectrum {j}"
            if not isinstance(rec, dict):
                raise ManifestParseError(f"{rwhere}: must be an object")
            extra = set(rec) - _RECORD_FIELDS
            if extra:
                warnings.warn(f"{rwhere}: ignoring unknown fields {sorted(extra)}", stacklevel=2)
            dil = _field(rec, "dilution_pct", float, rwhere)
            fname = _field(rec, "file", str, rwhere)
            path = d / fname
            if not path.exists():
                raise MissingSpectrumFile(f"{rwhere}: spectrum file not found: {path}")
            specs.append((dil, read_spectrum(path, label=f"{name}@{dil:g}")))
        try:
            parsed.append(LibraryEntry(name, inci, supplier, tuple(specs)))
        except ValueError as exc:
            raise ManifestParseError(f"{where}: {exc}") from None

    axis = _read_axis(d)
    if axis is None:
        axis = parsed[0].spectra[0][1].axis if parsed else WavenumberAxis.default()
    index = LibraryIndex(axis)
    for e in parsed:
        try:
            index = add_entry(index, e)
        except DuplicateName as exc:
            raise ManifestParseError(f"{mpath}: {exc}") from None
    return index
