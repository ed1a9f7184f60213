import io
import json
import subprocess
import sys

import numpy as np
import pytest

from revspec import pls
from revspec.cli import main
from revspec.design import interior_points, simplex_lattice, write_design, MixtureDesign
from revspec.spectra import SpectrumMatrix, read_matrix, write_matrix, write_spectrum
from revspec.synth import generate_material, mix_batch, variation_series

DILUTIONS = (100, 75, 50, 25, 5)


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def write_dilutions(directory, material, axis):
    pure = material.pure_spectrum(axis)
    paths = []
    for d in DILUTIONS:
        p = directory / f"{material.name}_{d}.csv"
        write_spectrum(p, pure.with_intensities(pure.intensities * d / 100))
        paths.append(p)
    return paths


def add_to_library(lib, material, axis, tmp):
    args = ["lib", "add", "--library", lib, "--name", material.name]
    for d, p in zip(DILUTIONS, write_dilutions(tmp, material, axis)):
        args += ["--spectrum", f"{d}={p}"]
    return run(*args)


@pytest.fixture
def library(tmp_path, axis):
    lib = tmp_path / "lib"
    src = tmp_path / "src"
    mats = [generate_material(300 + i, axis, 6, name=f"M{i}") for i in range(4)]
    for m in mats:
        code, _, err = add_to_library(lib, m, axis, src)
        assert code == 0, err
    return lib, mats


# -- lib -----------------------------------------------------------------------------


def test_lib_list_empty(tmp_path):
    (tmp_path / "lib").mkdir()
    code, out, _ = run("lib", "list", "--library", tmp_path / "lib")
    assert code == 0 and out.startswith("0 entries")


def test_lib_add_show_list(library):
    lib, mats = library
    code, out, _ = run("lib", "show", "M2", "--library", lib)
    assert code == 0
    assert "spectra: 5" in out
    for d in DILUTIONS:
        assert f"  {d}%" in out
    code, out, _ = run("lib", "list", "--library", lib)
    lines = out.splitlines()
    assert lines[0] == "4 entries"
    assert [ln.split("\t")[0] for ln in lines[1:]] == ["M0", "M1", "M2", "M3"]


def test_lib_add_duplicate(library, axis, tmp_path):
    lib, mats = library
    code, _, err = add_to_library(lib, mats[0], axis, tmp_path / "again")
    assert code == 2 and "DuplicateName" in err


def test_lib_add_missing_file(library, tmp_path):
    lib, _ = library
    code, _, err = run("lib", "add", "--library", lib, "--name", "X", "--spectrum", f"100={tmp_path / 'nope.csv'}")
    assert code == 3 and "nope.csv" in err


def test_lib_add_malformed_csv(library, tmp_path):
    lib, _ = library
    bad = tmp_path / "bad.csv"
    bad.write_text("wavenumber_cm1,intensity\n200,1.0\n204,abc\n")
    code, _, err = run("lib", "add", "--library", lib, "--name", "X", "--spectrum", f"100={bad}")
    assert code == 2 and "bad.csv:3" in err


def test_lib_show_unknown(library):
    code, _, err = run("lib", "show", "nothing", "--library", library[0])
    assert code == 2 and "nothing" in err


# -- identify --------------------------------------------------------------------------


def test_identify_dilution_series(library, tmp_path, axis):
    lib, mats = library
    paths = write_dilutions(tmp_path / "unknown", mats[1], axis)
    code, out, err = run("identify", *paths, "--library", lib, "--out", tmp_path / "res")
    assert code == 0, err
    rep = json.loads((tmp_path / "res" / "identify_report.json").read_text())
    assert rep["optimal_f"] == 1
    assert len(rep["ics"]) == 1
    top = rep["ics"][0]["matches"][0]
    assert top["name"] == "M1" and top["correlation"] >= 0.99
    assert (tmp_path / "res" / "ic_01.csv").exists()
    assert (tmp_path / "res" / "ica_by_blocks.csv").read_text().startswith("f,")
    assert "config_hash" in rep and rep["seed"] == 0


def test_identify_ambiguous_pair(tmp_path, axis):
    lib = tmp_path / "lib"
    a = generate_material(500, axis, 6, name="A")
    pure = a.pure_spectrum(axis)
    twin = pure.intensities + 0.05 * generate_material(501, axis, 6).pure_spectrum(axis).intensities
    p1, p2 = tmp_path / "a.csv", tmp_path / "twin.csv"
    write_spectrum(p1, pure)
    write_spectrum(p2, pure.with_intensities(twin))
    assert run("lib", "add", "--library", lib, "--name", "A", "--spectrum", f"100={p1}")[0] == 0
    assert run("lib", "add", "--library", lib, "--name", "A2", "--spectrum", f"100={p2}")[0] == 0
    paths = write_dilutions(tmp_path / "u", a, axis)
    code, out, _ = run("identify", *paths, "--library", lib, "--out", tmp_path / "res")
    rep = json.loads((tmp_path / "res" / "identify_report.json").read_text())
    ic = rep["ics"][0]
    assert {m["name"] for m in ic["matches"]} == {"A", "A2"}
    assert ic["status"] == "ambiguous"
    assert "include both in mixture design" in out


def test_identify_unmatched_component(library, tmp_path, axis):
    lib, _ = library
    stranger = generate_material(999, axis, 6, name="S")
    paths = write_dilutions(tmp_path / "u", stranger, axis)
    code, out, _ = run("identify", *paths, "--library", lib, "--out", tmp_path / "res")
    assert code == 0
    rep = json.loads((tmp_path / "res" / "identify_report.json").read_text())
    assert rep["ics"][0]["status"] == "unidentified"
    assert "sub-1%" in rep["ics"][0]["note"]


def test_identify_too_few_spectra(library, tmp_path, axis):
    lib, mats = library
    paths = write_dilutions(tmp_path / "u", mats[0], axis)[:3]
    code, _, err = run("identify", *paths, "--library", lib, "--out", tmp_path / "res")
    assert code == 2 and "TooFewSamples" in err


def test_identify_is_deterministic(library, tmp_path, axis):
    lib, mats = library
    mix = mix_batch(mats[:2], np.random.default_rng(0).dirichlet([1, 1], 8), 0.01, 3, axis=axis)
    write_matrix(tmp_path / "u.csv", mix)
    for d in ("r1", "r2"):
        assert run("identify", tmp_path / "u.csv", "--library", lib, "--out", tmp_path / d, "--seed", 4)[0] == 0
    for name in ("identify_report.json", "identify_report.txt", "ica_by_blocks.csv", "ic_01.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


# -- design ----------------------------------------------------------------------------


@pytest.mark.parametrize("names, floor", [("a,b,c", 10), ("a,b,c,d", 18), ("a,b,c,d,e", 30)])
def test_design_meets_floor(tmp_path, names, floor):
    code, out, _ = run("design", "--components", names, "--out", tmp_path)
    assert code == 0
    lines = [ln for ln in (tmp_path / "design.csv").read_text().splitlines() if not ln.startswith("#")]
    assert lines[0] == names
    assert len(lines) - 1 >= floor


def test_design_infeasible(tmp_path):
    code, _, err = run("design", "--components", "a,b,c", "--bound", "a=0.6:1", "--bound", "b=0.5:1",
                       "--out", tmp_path)
    assert code == 2 and "sum of lower bounds = 1.1 >= 1" in err


def test_design_bounds_and_kind(tmp_path):
    code, _, _ = run("design", "--components", "a,b,c", "--bound", "a=0.1:0.7", "--kind", "centroid",
                     "--output", tmp_path / "d.csv")
    assert code == 0
    text = (tmp_path / "d.csv").read_text()
    assert "#bounds: a,0.1,0.7" in text


# -- calibrate / quantify -----------------------------------------------------------------


@pytest.fixture
def calibration(tmp_path, axis):
    mats = [generate_material(700 + i, axis, 6, name=f"C{i}") for i in range(4)]
    d = simplex_lattice(4, 3, [m.name for m in mats])
    write_design(tmp_path / "design.csv", d)
    write_matrix(tmp_path / "cal.csv", mix_batch(mats, d.points, 0.01, 11, axis=axis))
    out = tmp_path / "cal"
    code, text, err = run("calibrate", "--design", tmp_path / "design.csv", "--spectra", tmp_path / "cal.csv",
                          "--out", out)
    assert code == 0, err
    return mats, d, out


def test_calibrate_noise_free(tmp_path, axis):
    mats = [generate_material(700 + i, axis, 6, name=f"C{i}") for i in range(4)]
    d = simplex_lattice(4, 3, [m.name for m in mats])
    write_design(tmp_path / "design.csv", d)
    write_matrix(tmp_path / "cal.csv", mix_batch(mats, d.points, 0.0, 0, axis=axis))
    code, text, _ = run("calibrate", "--design", tmp_path / "design.csv", "--spectra", tmp_path / "cal.csv",
                        "--out", tmp_path / "o")
    assert code == 0
    rep = json.loads((tmp_path / "o" / "calibrate_report.json").read_text())
    assert min(rep["metrics"]["r2y"]) >= 0.999
    assert (tmp_path / "o" / "metrics.csv").read_text().startswith("response,RMSEC,RMSECV,RMSEP,R2Y,Q2Y")


def test_calibrate_noisy_r2y(calibration):
    _, _, out = calibration
    rep = json.loads((out / "calibrate_report.json").read_text())
    assert min(rep["metrics"]["r2y"]) >= 0.94
    assert rep["metrics"]["rmsep"] is None
    assert "EmptyTestSet: RMSEP omitted" in rep["metrics"]["flags"]


def test_calibrate_single_row(tmp_path, axis):
    mats = [generate_material(i, axis, 5) for i in range(2)]
    write_design(tmp_path / "d.csv", MixtureDesign(("a", "b"), [[0.5, 0.5]]))
    write_matrix(tmp_path / "s.csv", mix_batch(mats, [[0.5, 0.5]], axis=axis))
    code, _, err = run("calibrate", "--design", tmp_path / "d.csv", "--spectra", tmp_path / "s.csv",
                       "--out", tmp_path / "o")
    assert code == 2 and "FoldTooSmall" in err


def test_calibrate_row_mismatch(calibration, tmp_path):
    code, _, err = run("calibrate", "--design", tmp_path / "design.csv", "--spectra", tmp_path / "cal.csv",
                       "--out", tmp_path / "o")
    assert code == 0
    d = read_matrix(tmp_path / "cal.csv")
    write_matrix(tmp_path / "short.csv", SpectrumMatrix(d.axis, d.rows[:-1]))
    code, _, err = run("calibrate", "--design", tmp_path / "design.csv", "--spectra", tmp_path / "short.csv",
                       "--out", tmp_path / "o")
    assert code == 2 and "rows" in err


def test_calibrate_zero_variance_response(tmp_path, axis):
    mats = [generate_material(i, axis, 5) for i in range(3)]
    P = [[0.8 - x, x, 0.2] for x in (0.1, 0.3, 0.5, 0.7)]
    write_design(tmp_path / "d.csv", MixtureDesign(("a", "b", "c"), P))
    write_matrix(tmp_path / "s.csv", mix_batch(mats, P, 0.01, 1, axis=axis))
    code, _, err = run("calibrate", "--design", tmp_path / "d.csv", "--spectra", tmp_path / "s.csv",
                       "--out", tmp_path / "o")
    assert code == 4 and "ZeroVarianceColumn" in err


def test_quantify_calibration_point_bit_identical(calibration, tmp_path):
    mats, d, out = calibration
    code, _, err = run("quantify", "--model", out / "model", "--spectra", tmp_path / "cal.csv", "--out", out)
    assert code == 0, err
    rep = json.loads((out / "quantify_report.json").read_text())
    model = pls.load_model(out / "model")
    fitted = pls.predict(model, read_matrix(tmp_path / "cal.csv"))
    got = np.array([[s["predicted_pct"][c] for c in d.components] for s in rep["samples"]])
    assert np.array_equal(got, fitted)


def test_quantify_held_out_unknown(calibration, tmp_path, axis):
    mats, d, out = calibration
    truth = np.vstack([interior_points(4)[0], [[0.5, 0.3, 0.2, 0.0]]])
    write_matrix(tmp_path / "unk.csv", mix_batch(mats, truth, 0.01, 99, axis=axis))
    ref = ["sample," + ",".join(d.components)]
    ref += [f"mix_{i + 1}," + ",".join(repr(float(100 * v)) for v in row) for i, row in enumerate(truth)]
    (tmp_path / "ref.csv").write_text("\n".join(ref) + "\n")
    code, text, err = run("quantify", "--model", out / "model", "--spectra", tmp_path / "unk.csv",
                          "--reference", tmp_path / "ref.csv", "--out", tmp_path / "q")
    assert code == 0, err
    rep = json.loads((tmp_path / "q" / "quantify_report.json").read_text())
    errs = [c["abs_error"] for cmp in rep["comparison"] for c in cmp["components"]]
    assert max(errs) <= 2.0
    absent = rep["comparison"][1]["components"][3]
    assert absent["experimental"] == 0.0 and absent["calculated"] <= 2.0
    assert "Experimental vs calculated" in text
    assert (tmp_path / "q" / "predictions.csv").read_text().startswith("sample,C0,C1,C2,C3")


def test_quantify_axis_mismatch(calibration, tmp_path):
    from revspec.spectra import WavenumberAxis

    _, _, out = calibration
    short = WavenumberAxis.from_range(400, 2000, 4)
    write_matrix(tmp_path / "short.csv", SpectrumMatrix(short, np.ones((1, len(short)))))
    code, _, err = run("quantify", "--model", out / "model", "--spectra", tmp_path / "short.csv",
                       "--out", tmp_path / "q")
    assert code == 2 and "AxisMismatch" in err


def test_quantify_missing_model(tmp_path):
    code, _, err = run("quantify", "--model", tmp_path / "nope", "--spectra", tmp_path / "x.csv", "--out", tmp_path)
    assert code == 3


# -- config ------------------------------------------------------------------------------


def test_config_file(library, tmp_path, axis):
    lib, mats = library
    cfg = tmp_path / "run.ini"
    cfg.write_text(f"[library]\npath = {lib}\n\n[ica]\nseed = 5\nthreshold = 0.85\n\n"
                   f"[output]\ndir = {tmp_path / 'cfgout'}\n")
    paths = write_dilutions(tmp_path / "u", mats[0], axis)
    code, out, err = run("identify", *paths, "--config", cfg)
    assert code == 0, err
    rep = json.loads((tmp_path / "cfgout" / "identify_report.json").read_text())
    assert rep["seed"] == 5 and rep["ica_by_blocks"]["threshold"] == 0.85
    assert len(rep["config_hash"]) == 64
    code, _, _ = run("identify", *paths, "--config", cfg, "--seed", 6, "--out", tmp_path / "o2")
    rep2 = json.loads((tmp_path / "o2" / "identify_report.json").read_text())
    assert rep2["seed"] == 6 and rep2["config_hash"] != rep["config_hash"]


@pytest.mark.parametrize("text", ["[ica]\nthreshold = 1.5\n", "[ica]\nseed = x\n", "not an ini"])
def test_bad_config(tmp_path, text):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(text)
    code, _, _ = run("design", "--components", "a,b", "--config", cfg, "--out", tmp_path)
    assert code == 2


def test_bad_axis_flag(tmp_path):
    code, _, err = run("design", "--components", "a,b", "--axis", "1,2", "--out", tmp_path)
    assert code == 2


def test_usage_error():
    assert run("frobnicate")[0] == 2


# -- synth -------------------------------------------------------------------------------


def test_synth_material_and_mix(tmp_path):
    code, out, _ = run("synth", "material", "--name", "P", "--seed", 3, "--dilutions", "100,50", "--out", tmp_path)
    assert code == 0
    assert (tmp_path / "P.json").exists() and (tmp_path / "P__50.csv").exists()
    run("synth", "material", "--name", "Q", "--seed", 4, "--out", tmp_path)
    code, out, _ = run("synth", "mix", "--materials", tmp_path / "P.json", tmp_path / "Q.json",
                       "--composition", "0.7,0.3", "--variants", 6, "--noise", 0.01, "--seed", 1,
                       "--output", tmp_path / "m.csv")
    assert code == 0
    assert read_matrix(tmp_path / "m.csv").shape[0] == 6
    assert len(json.loads(out)["compositions"]) == 6
    run("design", "--components", "P,Q", "--out", tmp_path)
    code, _, _ = run("synth", "mix", "--materials", tmp_path / "P.json", tmp_path / "Q.json",
                     "--design", tmp_path / "design.csv", "--output", tmp_path / "d.csv")
    assert code == 0 and read_matrix(tmp_path / "d.csv").shape[0] >= 6


def test_synth_is_seeded(tmp_path):
    run("synth", "material", "--name", "P", "--seed", 3, "--out", tmp_path / "a")
    run("synth", "material", "--name", "P", "--seed", 3, "--out", tmp_path / "b")
    assert (tmp_path / "a" / "P.json").read_bytes() == (tmp_path / "b" / "P.json").read_bytes()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "revspec", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("lib", "identify", "design", "calibrate", "quantify", "synth"):
        assert cmd in res.stdout


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_identify_four_material_unknown(tmp_path, axis, seed):
    lib = tmp_path / "lib"
    rng = np.random.default_rng(seed)
    mats = [generate_material(1000 * seed + i, axis, int(rng.integers(4, 10)), name=f"R{i:02d}") for i in range(12)]
    for m in mats:
        p = tmp_path / f"{m.name}.csv"
        write_spectrum(p, m.pure_spectrum(axis))
        assert run("lib", "add", "--library", lib, "--name", m.name, "--spectrum", f"100={p}")[0] == 0
    present = [mats[i] for i in (0, 3, 6, 9)]
    X, _ = variation_series(present, [0.25] * 4, 12, 0.01, seed, axis=axis)
    write_matrix(tmp_path / "u.csv", X)
    code, _, err = run("identify", tmp_path / "u.csv", "--library", lib, "--out", tmp_path / "res")
    assert code == 0, err
    rep = json.loads((tmp_path / "res" / "identify_report.json").read_text())
    top = {ic["matches"][0]["name"] for ic in rep["ics"] if ic["matches"]}
    assert {m.name for m in present} <= top
