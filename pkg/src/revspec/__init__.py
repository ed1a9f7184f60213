"""Reverse engineering of mixtures from vibrational spectra.

Blind source separation against a reference library identifies the
constituents; a mixture-design calibrated PLS model quantifies them.
"""

from .bss import IcaModel, IcaOptions, estimate_mixing, fit_infomax, ica_by_blocks, whiten
from .design import (
    MixtureDesign,
    apply_bounds,
    generate_design,
    minimum_runs,
    simplex_centroid,
    simplex_lattice,
)
from .pls import CvScheme, PlsModel, cross_validate, fit_nipals, metrics, predict
from .spectra import (
    Spectrum,
    SpectrumMatrix,
    WavenumberAxis,
    msc_correct,
    msc_reference,
    normalize,
    resample,
)
from .speclib import LibraryEntry, LibraryIndex, MatchResult, add_entry, match_spectrum

__version__ = "0.1.0"

__all__ = [
    "CvScheme", "IcaModel", "IcaOptions", "LibraryEntry", "LibraryIndex", "MatchResult",
    "MixtureDesign", "PlsModel", "Spectrum", "SpectrumMatrix", "WavenumberAxis",
    "add_entry", "apply_bounds", "cross_validate", "estimate_mixing", "fit_infomax",
    "fit_nipals", "generate_design", "ica_by_blocks", "match_spectrum", "metrics",
    "minimum_runs", "msc_correct", "msc_reference", "normalize", "predict", "resample",
    "simplex_centroid", "simplex_lattice", "whiten",
]
