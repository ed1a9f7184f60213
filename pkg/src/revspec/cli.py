"""Command-line entry point: ``revspec <command> ...``.

Exit codes: 0 success, 2 bad input, 3 I/O failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import pipeline, speclib, synth
from .design import read_design
from .errors import InputError, RevspecError
from .spectra import WavenumberAxis, read_spectrum, write_matrix, write_spectrum


def _common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="INI-style config file")
    parser.add_argument("--seed", type=int, default=d, help="random seed (ICA initialisation, synthesis)")
    parser.add_argument("--out", default=d, help="output directory")
    parser.add_argument("--axis", default=d, help="working axis as min,max,step in cm-1")
    parser.add_argument("--library", default=d, help="spectral library directory")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="revspec", description="Identify and quantify mixture constituents from spectra.")
    _common(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, **kw):
        sp = sub.add_parser(name, **kw)
        _common(sp, suppress=True)
        return sp

    lib = cmd("lib", help="manage the spectral library")
    libsub = lib.add_subparsers(dest="lib_command", required=True)
    add = libsub.add_parser("add", help="add a raw material")
    _common(add, suppress=True)
    add.add_argument("--name", required=True)
    add.add_argument("--inci", default="")
    add.add_argument("--supplier", default="")
    add.add_argument("--spectrum", action="append", default=[], metavar="PCT=FILE",
                     help="dilution percentage and spectrum CSV; repeat per dilution")
    ls = libsub.add_parser("list", help="list entries")
    _common(ls, suppress=True)
    show = libsub.add_parser("show", help="show one entry")
    _common(show, suppress=True)
    show.add_argument("name")

    ident = cmd("identify", help="find the library materials present in a set of spectra")
    ident.add_argument("spectra", nargs="+", help="spectrum or matrix CSV files")

    des = cmd("design", help="generate a calibration mixture design")
    des.add_argument("--components", required=True, help="comma-separated component names")
    des.add_argument("--bound", action="append", default=[], metavar="NAME=LO:HI",
                     help="proportion bounds for one component; repeatable")
    des.add_argument("--kind", choices=["lattice", "centroid", "centroid_augmented"])
    des.add_argument("--degree", type=int)
    des.add_argument("--output", help="design CSV path (default <out>/design.csv)")

    cal = cmd("calibrate", help="fit a PLS calibration from a design and its spectra")
    cal.add_argument("--design", required=True)
    cal.add_argument("--spectra", required=True, help="matrix CSV, one column per design row")
    cal.add_argument("--test-design")
    cal.add_argument("--test-spectra")
    cal.add_argument("--preprocess", help="none, snv, msc or snv+msc")
    cal.add_argument("--lv-max", type=int)
    cal.add_argument("--cv", choices=["auto", "loo", "venetian"])

    qua = cmd("quantify", help="predict compositions of unknown spectra")
    qua.add_argument("--model", required=True, help="model directory written by calibrate")
    qua.add_argument("--spectra", required=True)
    qua.add_argument("--reference", help="CSV of known compositions (sample,<component>...)")
    qua.add_argument("--clip", action="store_true", help="clip predictions to [0, 100]")

    syn = cmd("synth", help="generate synthetic materials and mixture spectra")
    synsub = syn.add_subparsers(dest="synth_command", required=True)
    mat = synsub.add_parser("material", help="random band-model material")
    _common(mat, suppress=True)
    mat.add_argument("--name")
    mat.add_argument("--bands", type=int, default=6)
    mat.add_argument("--shape", choices=["gaussian", "lorentzian", "mixed"], default="gaussian")
    mat.add_argument("--dilutions", default="100", help="comma-separated dilution levels to write")
    mx = synsub.add_parser("mix", help="mixture spectra from material JSON files")
    _common(mx, suppress=True)
    mx.add_argument("--materials", nargs="+", required=True)
    grp = mx.add_mutually_exclusive_group(required=True)
    grp.add_argument("--composition", help="comma-separated proportions")
    grp.add_argument("--design", help="design CSV; one mixture per row")
    mx.add_argument("--variants", type=int, default=0,
                    help="with --composition: number of perturbed variants to generate")
    mx.add_argument("--spread", type=float, default=3.0)
    mx.add_argument("--noise", type=float, default=0.0)
    mx.add_argument("--output", required=True)
    return p


def _config(args) -> pipeline.PipelineConfig:
    cfg = pipeline.load_config(args.config) if args.config else pipeline.PipelineConfig()
    if args.seed is not None:
        cfg.ica.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.axis is not None:
        cfg.axis = pipeline.parse_axis(args.axis)
    if args.library is not None:
        cfg.library_path = args.library
    return cfg.validate()


def _parse_bounds(items) -> dict:
    bounds = {}
    for item in items:
        try:
            name, rng = item.split("=", 1)
            lo, hi = (float(v) for v in rng.split(":"))
        except ValueError:
            raise InputError(f"--bound expects NAME=LO:HI, got {item!r}") from None
        bounds[name.strip()] = (lo, hi)
    return bounds


def _run(args, out) -> int:
    cfg = _config(args)
    if args.command == "lib":
        if not cfg.library_path:
            raise InputError("--library is required")
        lib = Path(cfg.library_path)
        if args.lib_command == "add":
            if not args.spectrum:
                raise InputError("lib add needs at least one --spectrum PCT=FILE")
            records = []
            for item in args.spectrum:
                pct, _, fname = item.partition("=")
                try:
                    records.append((float(pct), read_spectrum(fname)))
                except ValueError:
                    raise InputError(f"--spectrum expects PCT=FILE, got {item!r}") from None
            index = pipeline.lib_add(lib, args.name, records, args.inci, args.supplier)
            out.write(f"added '{args.name}' ({len(records)} spectra); library has {len(index)} entries\n")
        elif args.lib_command == "list":
            out.write(pipeline.lib_list_text(speclib.load(lib)))
        else:
            out.write(pipeline.lib_show_text(speclib.load(lib), args.name))
        return 0

    if args.command == "identify":
        report = pipeline.cmd_identify(args.spectra, cfg)
        out.write(pipeline.identify_text(report))
        return 0

    if args.command == "design":
        if args.kind:
            cfg.design.kind = args.kind
        if args.degree:
            cfg.design.degree = args.degree
        names = [c.strip() for c in args.components.split(",") if c.strip()]
        report = pipeline.cmd_design(names, cfg, _parse_bounds(args.bound), args.output)
        out.write(f"{report['runs']} mixtures for {len(names)} components written to {report['file']}\n")
        if "warning" in report:
            out.write(f"warning: {report['warning']}\n")
        return 0

    if args.command == "calibrate":
        if args.preprocess:
            cfg.pls.preprocess = args.preprocess
        if args.lv_max is not None:
            cfg.pls.lv_max = args.lv_max
        if args.cv:
            cfg.pls.cv = args.cv
        pipeline.cmd_calibrate(args.design, args.spectra, cfg, args.test_design, args.test_spectra)
        out.write((Path(cfg.out) / "calibrate_report.txt").read_text(encoding="utf-8"))
        return 0

    if args.command == "quantify":
        cfg.pls.clip = cfg.pls.clip or args.clip
        report = pipeline.cmd_quantify(args.model, args.spectra, cfg, args.reference)
        out.write(pipeline.quantify_text(report))
        return 0

    if args.command == "synth":
        axis = cfg.working_axis(WavenumberAxis.default())
        seed = cfg.seed
        if args.synth_command == "material":
            m = synth.generate_material(seed, axis, args.bands, name=args.name, shape=args.shape)
            d = Path(cfg.out)
            synth.save_material(d / f"{m.name}.json", m)
            pure = m.pure_spectrum(axis)
            for pct in (float(v) for v in args.dilutions.split(",")):
                write_spectrum(d / f"{m.name}__{pct:g}.csv", pure.with_intensities(pure.intensities * pct / 100.0))
            out.write(f"material '{m.name}' with {len(m.bands)} bands written to {d}\n")
            return 0
        mats = [synth.load_material(p) for p in args.materials]
        if args.design:
            d = read_design(args.design)
            mat = synth.mix_batch(mats, d.points, args.noise, seed, axis=axis)
            comps = d.points
        else:
            c = [float(v) for v in args.composition.split(",")]
            if args.variants:
                mat, comps = synth.variation_series(mats, c, args.variants, args.noise, seed,
                                                    spread=args.spread, axis=axis)
            else:
                mat = synth.mix_batch(mats, [c], args.noise, seed, axis=axis)
                comps = np.atleast_2d(c)
        write_matrix(args.output, mat)
        out.write(json.dumps({"rows": len(mat), "compositions": np.asarray(comps).tolist()}) + "\n")
        return 0
    raise InputError(f"unknown command {args.command}")  # pragma: no cover


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _run(args, out)
    except RevspecError as exc:
        err.write(f"error: {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        err.write(f"error: I/O: {exc}\n")
        return 3
    except OSError as exc:
        err.write(f"error: I/O: {exc}\n")
        return 3
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        err.write(f"error: invalid input: {exc}\n")
        return 2
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        err.write(f"error: numerical failure: {exc}\n")
        return 4


if __name__ == "__main__":
    sys.exit(main())
