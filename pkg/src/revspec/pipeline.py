"""Identify -> design -> calibrate -> quantify workflow.

Each ``cmd_*`` function reads its inputs from files, writes its outputs
atomically under ``config.out`` and returns the report as a dict. Reports
carry no timestamps or absolute paths, so a rerun with the same inputs,
config and seed produces identical bytes.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bss, design as dsg, pls, speclib
from ._io import atomic_write_text, fmt
from .errors import AxisMismatch, InputError, TooFewSamples
from .spectra import (
    Spectrum,
    SpectrumMatrix,
    WavenumberAxis,
    msc_correct,
    msc_reference,
    normalize_matrix,
    read_matrix,
    read_spectrum,
    resample_matrix,
    write_spectrum,
)

UNIDENTIFIED_NOTE = "possible sub-1% constituent or absent from library"
AMBIGUOUS_NOTE = "ambiguous - include both in mixture design"


@dataclass
class IcaSettings:
    B: int = 2
    f_max: int = 6
    threshold: float = 0.80
    seed: int = 0
    max_iter: int = 500
    tol: float = 1e-6


@dataclass
class DesignSettings:
    kind: str = "lattice"
    degree: int = 3
    bounds: dict = field(default_factory=dict)  # name -> [lower, upper]


@dataclass
class PlsSettings:
    cv: str = "auto"  # auto | loo | venetian
    k: int = 5
    lv_max: int = 10
    preprocess: str = "none"
    clip: bool = False


@dataclass
class PipelineConfig:
    library_path: str | None = None
    axis: tuple | None = None  # (min, max, step)
    ica: IcaSettings = field(default_factory=IcaSettings)
    match_threshold: float = speclib.DEFAULT_THRESHOLD
    design: DesignSettings = field(default_factory=DesignSettings)
    pls: PlsSettings = field(default_factory=PlsSettings)
    out: str = "out"

    def validate(self) -> "PipelineConfig":
        for name, v in (("ica.threshold", self.ica.threshold), ("match.threshold", self.match_threshold)):
            if not 0 <= v <= 1:
                raise InputError(f"{name} must lie in [0, 1], got {v}")
        if self.ica.B < 2:
            raise InputError("ica.B must be >= 2")
        if self.axis is not None:
            try:
                WavenumberAxis.from_range(*self.axis)
            except (TypeError, ValueError) as exc:
                raise InputError(f"axis: {exc}") from None
        return self

    def hash(self) -> str:
        """SHA-256 of every setting that can change a result.

        File locations (``out``, ``library_path``) are excluded so that a
        moved or copied workspace hashes the same; reports that read the
        library record its content digest separately.
        """
        d = asdict(self)
        d.pop("out")
        d.pop("library_path")
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()

    def working_axis(self, fallback: WavenumberAxis) -> WavenumberAxis:
        return WavenumberAxis.from_range(*self.axis) if self.axis else fallback

    @property
    def seed(self) -> int:
        return self.ica.seed


def parse_axis(text: str) -> tuple:
    try:
        lo, hi, step = (float(v) for v in text.split(","))
    except ValueError:
        raise InputError(f"--axis expects min,max,step, got {text!r}") from None
    return (lo, hi, step)


def load_config(path) -> PipelineConfig:
    """Read an INI-style file (``[section]`` headers, ``key = value`` lines)."""
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise InputError(f"{path}: {exc}") from None
    cfg = PipelineConfig()
    try:
        if cp.has_section("library"):
            cfg.library_path = cp.get("library", "path", fallback=None)
        if cp.has_section("axis"):
            a = cp["axis"]
            cfg.axis = (a.getfloat("min"), a.getfloat("max"), a.getfloat("step"))
        if cp.has_section("ica"):
            s = cp["ica"]
            cfg.ica = IcaSettings(
                B=s.getint("B", cfg.ica.B),
                f_max=s.getint("f_max", cfg.ica.f_max),
                threshold=s.getfloat("threshold", cfg.ica.threshold),
                seed=s.getint("seed", cfg.ica.seed),
                max_iter=s.getint("max_iter", cfg.ica.max_iter),
                tol=s.getfloat("tol", cfg.ica.tol),
            )
        if cp.has_section("match"):
            cfg.match_threshold = cp["match"].getfloat("threshold", cfg.match_threshold)
        if cp.has_section("design"):
            s = cp["design"]
            bounds = {}
            for key, val in s.items():
                if key.startswith("bound."):
                    lo, hi = (float(v) for v in val.split(":"))
                    bounds[key[len("bound."):]] = [lo, hi]
            cfg.design = DesignSettings(s.get("kind", "lattice"), s.getint("degree", 3), bounds)
        if cp.has_section("pls"):
            s = cp["pls"]
            cfg.pls = PlsSettings(
                cv=s.get("cv", "auto"),
                k=s.getint("k", 5),
                lv_max=s.getint("lv_max", 10),
                preprocess=s.get("preprocess", "none"),
                clip=s.getboolean("clip", False),
            )
        if cp.has_section("output"):
            cfg.out = cp.get("output", "dir", fallback=cfg.out)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: {exc}") from None
    return cfg.validate()


# -- helpers ---------------------------------------------------------------------


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, ensure_ascii=False) + "\n"


def _stamp(report: dict, config: PipelineConfig) -> dict:
    return {"config_hash": config.hash(), "seed": config.seed, **report}


def _load_inputs(paths: Sequence, axis: WavenumberAxis) -> SpectrumMatrix:
    spectra: list[Spectrum] = []
    for p in paths:
        spectra.extend(resample_matrix(read_matrix(p), axis))
    if not spectra:
        raise InputError("no input spectra")
    return SpectrumMatrix.from_spectra(spectra)


class Preprocessor:
    """Chain of ``snv``/``msc`` steps with the MSC reference frozen at fit time."""

    def __init__(self, steps: str = "none", reference: np.ndarray | None = None):
        self.steps = [s.strip() for s in steps.split("+") if s.strip() and s.strip() != "none"]
        for s in self.steps:
            if s not in ("snv", "msc"):
                raise InputError(f"unknown preprocessing step '{s}'")
        self.reference = reference

    def fit_transform(self, mat: SpectrumMatrix) -> SpectrumMatrix:
        return self._run(mat, fit=True)

    def transform(self, mat: SpectrumMatrix) -> SpectrumMatrix:
        return self._run(mat, fit=False)

    def _run(self, mat: SpectrumMatrix, fit: bool) -> SpectrumMatrix:
        for step in self.steps:
            if step == "snv":
                mat = normalize_matrix(mat)
            else:
                if fit:
                    self.reference = msc_reference(mat).intensities
                ref = Spectrum(mat.axis, self.reference, "msc_reference")
                mat = SpectrumMatrix.from_spectra([msc_correct(s, ref) for s in mat])
        return mat


# -- library ---------------------------------------------------------------------


def lib_add(library: Path, name: str, records: Sequence[tuple[float, Spectrum]],
            inci: str = "", supplier: str = "") -> speclib.LibraryIndex:
    index = speclib.load(library) if (library / speclib.MANIFEST).exists() else speclib.LibraryIndex()
    try:
        entry = speclib.LibraryEntry(name, inci, supplier, tuple(records))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    index = speclib.add_entry(index, entry)
    speclib.save(index, library)
    return index


def lib_list_text(index: speclib.LibraryIndex) -> str:
    entries = sorted(index.entries, key=lambda e: e.name)
    lines = [f"{len(entries)} entries"]
    for e in entries:
        dil = ", ".join(f"{d:g}%" for d in sorted(e.dilutions, reverse=True))
        lines.append(f"{e.name}\t{e.inci}\t{e.supplier}\t[{dil}]")
    return "\n".join(lines) + "\n"


def lib_show_text(index: speclib.LibraryIndex, name: str) -> str:
    try:
        e = index.get(name)
    except KeyError:
        raise InputError(f"no library entry named '{name}'") from None
    lines = [f"name: {e.name}", f"inci: {e.inci}", f"supplier: {e.supplier}",
             f"spectra: {len(e.spectra)}"]
    for d, s in sorted(e.spectra, key=lambda t: -t[0]):
        lines.append(f"  {d:g}%  {len(s.axis)} points  {s.axis.values[0]:g}-{s.axis.values[-1]:g} cm-1")
    return "\n".join(lines) + "\n"


# -- identify --------------------------------------------------------------------


def cmd_identify(spectra_paths: Sequence, config: PipelineConfig) -> dict:
    """Blind-separate the input spectra and match each component to the library."""
    if not config.library_path:
        raise InputError("identify needs a library (--library or [library] path)")
    index = speclib.load(config.library_path)
    if not len(index):
        raise InputError("the spectral library is empty")
    axis = config.working_axis(index.axis)
    raw = _load_inputs(spectra_paths, axis)
    s, n = raw.shape
    B = config.ica.B
    if s < 2 * B:
        raise TooFewSamples(f"identify needs at least {2 * B} spectra (B={B}), got {s}")
    X = Preprocessor("snv+msc").fit_transform(raw)
    opts = bss.IcaOptions(max_iter=config.ica.max_iter, tol=config.ica.tol, seed=config.ica.seed)
    f_max = min(config.ica.f_max, s // B, n)
    blocks = bss.ica_by_blocks(X, B, f_max, opts, threshold=config.ica.threshold)
    model = bss.fit_infomax(X, blocks.optimal_f, opts)

    out = Path(config.out)
    bss.save_ica_model(out / "ica", model, X.axis, list(X.labels))
    table_lines = ["f," + ",".join(f"ic{i + 1}" for i in range(f_max)) + ",min"]
    for row in blocks.to_rows():
        vals = ["" if v is None else fmt(v) for v in row[1:]]
        table_lines.append(f"{row[0]}," + ",".join(vals) + f",{fmt(min(blocks.correlation_table[row[0]]))}")
    atomic_write_text(out / "ica_by_blocks.csv", "\n".join(table_lines) + "\n")

    ics = []
    for i in range(model.f):
        spec = Spectrum(X.axis, model.S[i], f"IC{i + 1}")
        fname = f"ic_{i + 1:02d}.csv"
        write_spectrum(out / fname, spec)
        matches = speclib.match_spectrum(index, spec, config.match_threshold)
        allc = speclib.match_spectrum(index, spec, 0.0)
        rec = {
            "ic": i + 1,
            "file": fname,
            "matches": [
                {"name": m.entry_name, "dilution_pct": m.dilution_pct, "correlation": m.correlation}
                for m in matches
            ],
            "best_candidate": {"name": allc[0].entry_name, "correlation": allc[0].correlation},
        }
        if not matches:
            rec["status"], rec["note"] = "unidentified", UNIDENTIFIED_NOTE
        elif len(matches) > 1:
            rec["status"], rec["note"] = "ambiguous", AMBIGUOUS_NOTE
        else:
            rec["status"] = "identified"
        ics.append(rec)

    identified = sorted({m["name"] for rec in ics for m in rec["matches"]})
    report = _stamp({
        "command": "identify",
        "inputs": [Path(p).name for p in spectra_paths],
        "n_spectra": s,
        "library_sha256": speclib.digest(index),
        "preprocessing": "snv+msc",
        "ica_by_blocks": {
            "B": B,
            "threshold": config.ica.threshold,
            "tested_orders": blocks.tested_orders,
            "min_correlation": {str(f): min(blocks.correlation_table[f]) for f in blocks.tested_orders},
            "optimal_f": blocks.optimal_f,
        },
        "optimal_f": blocks.optimal_f,
        "ica": {"converged": model.converged, "iterations": model.iterations,
                "relative_residual": model.residual / float(np.linalg.norm(X.rows))},
        "ics": ics,
        "identified": identified,
    }, config)
    atomic_write_text(out / "identify_report.json", _json(report))
    atomic_write_text(out / "identify_report.txt", identify_text(report))
    return report


def identify_text(report: dict) -> str:
    lines = [
        f"Identification  (config {report['config_hash'][:12]}, seed {report['seed']})",
        f"spectra: {report['n_spectra']}   independent components: {report['optimal_f']}",
        "",
        "ICA by blocks (minimum matched |corr| per order)",
    ]
    for f, v in report["ica_by_blocks"]["min_correlation"].items():
        mark = "  <- selected" if int(f) == report["optimal_f"] else ""
        lines.append(f"  f={f:>2}  {v:.4f}{mark}")
    lines.append("")
    for rec in report["ics"]:
        head = f"IC{rec['ic']}  [{rec['status']}]"
        if rec["matches"]:
            head += "  " + "; ".join(f"{m['name']} ({m['correlation']:.4f})" for m in rec["matches"])
        else:
            bc = rec["best_candidate"]
            head += f"  best candidate {bc['name']} ({bc['correlation']:.4f})"
        lines.append(head)
        if "note" in rec:
            lines.append(f"      note: {rec['note']}")
    return "\n".join(lines) + "\n"


# -- design ----------------------------------------------------------------------


def cmd_design(components: Sequence[str], config: PipelineConfig, bounds: dict | None = None,
               output: str | None = None) -> dict:
    """Generate and write a calibration mixture design for ``components``."""
    q = len(components)
    if not 2 <= q <= 5:
        raise InputError(f"designs support 2 to 5 components, got {q}")
    if len(set(components)) != q:
        raise InputError("component names must be unique")
    bmap = dict(config.design.bounds)
    bmap.update(bounds or {})
    unknown = set(bmap) - set(components)
    if unknown:
        raise InputError(f"bounds given for unknown components {sorted(unknown)}")
    blist = [tuple(bmap.get(c, (0.0, 1.0))) for c in components] if bmap else None
    d = dsg.generate_design(components, config.design.kind, config.design.degree, blist)
    path = Path(output) if output else Path(config.out) / "design.csv"
    dsg.write_design(path, d)
    report = _stamp({
        "command": "design",
        "components": list(components),
        "kind": config.design.kind,
        "runs": len(d),
        "minimum_runs": dsg.minimum_runs(q),
        "rejected_by_upper_bounds": 0 if d.rejected is None else int(len(d.rejected)),
        "file": path.name,
    }, config)
    if len(d) < dsg.minimum_runs(q):
        report["warning"] = "bounds leave fewer feasible lattice points than the minimum run count"
    return report


# -- calibrate -------------------------------------------------------------------


def _cv_scheme(settings: PlsSettings, s: int) -> pls.CvScheme:
    if settings.cv == "auto":
        return pls.CvScheme.default_for(s)
    if settings.cv == "loo":
        return pls.CvScheme("loo")
    if settings.cv == "venetian":
        return pls.CvScheme("venetian", settings.k)
    raise InputError(f"unknown cv scheme {settings.cv!r}")


def _design_targets(d: dsg.MixtureDesign) -> np.ndarray:
    return 100.0 * d.points


def cmd_calibrate(design_path, spectra_path, config: PipelineConfig,
                  test_design_path=None, test_spectra_path=None) -> dict:
    """Cross-validate, fit the PLS model and write it with its metrics table."""
    d = dsg.read_design(design_path)
    raw = read_matrix(spectra_path)
    if config.axis:
        raw = resample_matrix(raw, config.working_axis(raw.axis))
    if len(d) != len(raw):
        raise InputError(f"design has {len(d)} rows but {len(raw)} spectra were given")
    Y = _design_targets(d)
    pre = Preprocessor(config.pls.preprocess)
    X = pre.fit_transform(raw)
    s, n = X.shape
    scheme = _cv_scheme(config.pls, s)
    if s < 3:
        raise pls.FoldTooSmall(f"calibration needs at least 3 mixtures, got {s}")
    lv_max = min(config.pls.lv_max, pls.max_lv_for(s, n, scheme))
    cv = pls.cross_validate(X, Y, scheme, lv_max)
    model = pls.fit_nipals(X, Y, cv.selected, response_names=d.components)

    X_test = Y_test = None
    if test_design_path and test_spectra_path:
        td = dsg.read_design(test_design_path)
        traw = resample_matrix(read_matrix(test_spectra_path), X.axis)
        if td.components != d.components or len(td) != len(traw):
            raise InputError("test design and test spectra do not match the calibration set")
        X_test, Y_test = pre.transform(traw), _design_targets(td)
    rep = pls.metrics(model, X, Y, X_test, Y_test, scheme, cv_result=cv)

    out = Path(config.out)
    mdir = out / "model"
    pls.save_model(mdir, model)
    calib = {"preprocess": config.pls.preprocess, "components": list(d.components),
             "units": "percent"}
    if pre.reference is not None:
        write_spectrum(mdir / "msc_reference.csv", Spectrum(X.axis, pre.reference, "msc_reference"))
    atomic_write_text(mdir / "calibration.json", _json(calib))
    atomic_write_text(out / "metrics.csv", rep.to_csv())
    cv_lines = ["n_lv,rmsecv_pooled," + ",".join(d.components)]
    for a in cv.lvs:
        cv_lines.append(f"{a},{fmt(cv.rmsecv_total[a])}," + ",".join(fmt(v) for v in cv.rmsecv[a]))
    atomic_write_text(out / "rmsecv.csv", "\n".join(cv_lines) + "\n")

    report = _stamp({
        "command": "calibrate",
        "design": Path(design_path).name,
        "spectra": Path(spectra_path).name,
        "n_samples": s,
        "cv": {"kind": scheme.kind, "k": scheme.k if scheme.kind == "venetian" else None,
               "lv_max": lv_max, "selected_n_lv": cv.selected},
        "n_lv": model.n_lv,
        "metrics": _metrics_dict(rep),
    }, config)
    atomic_write_text(out / "calibrate_report.json", _json(report))
    atomic_write_text(out / "calibrate_report.txt",
                      f"PLS calibration: {s} mixtures, {model.n_lv} latent variables "
                      f"({scheme.kind} CV)\n\n" + rep.to_text()
                      + "".join(f"flag: {f}\n" for f in rep.flags))
    return report


def _metrics_dict(rep: pls.MetricsReport) -> dict:
    return {
        "responses": list(rep.responses),
        "rmsec": rep.rmsec.tolist(),
        "rmsecv": rep.rmsecv.tolist(),
        "rmsep": None if rep.rmsep is None else rep.rmsep.tolist(),
        "r2y": rep.r2y.tolist(),
        "q2y": rep.q2y.tolist(),
        "flags": list(rep.flags),
    }


# -- quantify --------------------------------------------------------------------


def read_reference(path) -> tuple[list[str], dict]:
    """Reference compositions: header ``sample,<component>...``, values in percent."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise InputError(f"{path}: empty reference file")
    header = [h.strip() for h in lines[0].split(",")]
    if header[0] != "sample":
        raise InputError(f"{path}:1: first column must be 'sample'")
    rows = {}
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields")
        try:
            rows[parts[0]] = [float(v) for v in parts[1:]]
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric reference value") from None
    return header[1:], rows


def cmd_quantify(model_dir, spectra_path, config: PipelineConfig, reference_path=None) -> dict:
    """Predict compositions (percent) of unknown spectra with a saved calibration."""
    mdir = Path(model_dir)
    model = pls.load_model(mdir)
    calib = json.loads((mdir / "calibration.json").read_text(encoding="utf-8"))
    ref = None
    if (mdir / "msc_reference.csv").exists():
        ref = read_spectrum(mdir / "msc_reference.csv").intensities
    pre = Preprocessor(calib["preprocess"], ref)
    raw = read_matrix(spectra_path)
    model_axis = WavenumberAxis(model.wavenumbers)
    if raw.axis != model_axis:
        if not raw.axis.covers(model_axis):
            raise AxisMismatch("unknown spectra do not cover the calibration axis")
        raw = resample_matrix(raw, model_axis)
    X = pre.transform(raw)
    Yhat = pls.predict(model, X, clip=config.pls.clip)
    clipped = bool(config.pls.clip)
    names = list(model.response_names)
    samples = []
    for lab, row in zip(X.labels, Yhat):
        samples.append({"sample": lab, "predicted_pct": dict(zip(names, row.tolist()))})

    comparison = None
    if reference_path:
        rnames, rows = read_reference(reference_path)
        missing = set(rnames) - set(names)
        if missing:
            raise InputError(f"reference names unknown components {sorted(missing)}")
        comparison = []
        for srec in samples:
            if srec["sample"] not in rows:
                continue
            exp = dict(zip(rnames, rows[srec["sample"]]))
            comparison.append({
                "sample": srec["sample"],
                "components": [
                    {"name": c, "experimental": exp[c], "calculated": srec["predicted_pct"][c],
                     "abs_error": abs(exp[c] - srec["predicted_pct"][c])}
                    for c in rnames
                ],
            })

    metrics_csv = Path(model_dir).parent / "metrics.csv"
    metrics_rows = None
    if metrics_csv.exists():
        metrics_rows = metrics_csv.read_text(encoding="utf-8")
    report = _stamp({
        "command": "quantify",
        "spectra": Path(spectra_path).name,
        "components": names,
        "clipped": clipped,
        "samples": samples,
        "model_metrics_csv": metrics_rows,
        "comparison": comparison,
    }, config)
    out = Path(config.out)
    atomic_write_text(out / "quantify_report.json", _json(report))
    atomic_write_text(out / "quantify_report.txt", quantify_text(report))
    pred_lines = ["sample," + ",".join(names)]
    for srec in samples:
        pred_lines.append(srec["sample"] + "," + ",".join(fmt(srec["predicted_pct"][c]) for c in names))
    atomic_write_text(out / "predictions.csv", "\n".join(pred_lines) + "\n")
    return report


def quantify_text(report: dict) -> str:
    names = report["components"]
    w = max(12, *(len(c) for c in names))
    lines = [f"Composition (%)  (config {report['config_hash'][:12]}, seed {report['seed']})", ""]
    lines.append(f"{'sample':<14}" + "".join(f"{c:>{w + 2}}" for c in names))
    for s in report["samples"]:
        lines.append(f"{s['sample']:<14}" + "".join(f"{s['predicted_pct'][c]:>{w + 2}.2f}" for c in names))
    if report["comparison"]:
        lines += ["", "Experimental vs calculated"]
        for cmp in report["comparison"]:
            lines.append(f"  {cmp['sample']}")
            for c in cmp["components"]:
                lines.append(f"    {c['name']:<{w}}  exp {c['experimental']:>7.2f}  "
                             f"calc {c['calculated']:>7.2f}  |err| {c['abs_error']:.2f}")
    return "\n".join(lines) + "\n"
