"""
The whole workflow from the command line
========================================

``revspec`` chains the steps: build a library, identify what an unknown
contains, design calibration mixtures for those materials, calibrate and
quantify. Here synthetic data stands in for the spectrometer, and each
command is run through ``revspec.cli.main`` exactly as from a shell.
"""

import json
import tempfile
from pathlib import Path

from revspec import synth
from revspec.cli import main
from revspec.spectra import WavenumberAxis, write_matrix

axis = WavenumberAxis.default()
work = Path(tempfile.mkdtemp())


def revspec(*args):
    argv = [str(a) for a in args]
    print("$ revspec", " ".join(argv))
    assert main(argv) == 0


# library of six materials, each with a dilution series
for i in range(6):
    revspec("synth", "material", "--name", f"RM{i}", "--seed", i, "--dilutions", "100,75,50,25,5",
            "--out", work / "materials")
    revspec("lib", "add", "--library", work / "lib", "--name", f"RM{i}",
            *[x for d in (100, 75, 50, 25, 5) for x in ("--spectrum", f"{d}={work / 'materials' / f'RM{i}__{d}.csv'}")])
revspec("lib", "list", "--library", work / "lib")

# an unknown made of RM1, RM3 and RM4, measured as 12 perturbed variants
present = [synth.load_material(work / "materials" / f"RM{i}.json") for i in (1, 3, 4)]
X, _ = synth.variation_series(present, [0.5, 0.3, 0.2], 12, 0.005, seed=0, axis=axis)
write_matrix(work / "unknown_series.csv", X)
write_matrix(work / "unknown.csv", synth.mix_batch(present, [[0.5, 0.3, 0.2]], 0.005, 1, axis=axis,
                                                    labels=["unknown"]))

revspec("identify", work / "unknown_series.csv", "--library", work / "lib", "--out", work / "identify")
found = json.loads((work / "identify" / "identify_report.json").read_text())["identified"]

revspec("design", "--components", ",".join(found), "--out", work / "design")
revspec("synth", "mix", "--materials", *[work / "materials" / f"{n}.json" for n in found],
        "--design", work / "design" / "design.csv", "--noise", 0.005, "--output", work / "cal.csv")
revspec("calibrate", "--design", work / "design" / "design.csv", "--spectra", work / "cal.csv",
        "--out", work / "calibrate")
revspec("quantify", "--model", work / "calibrate" / "model", "--spectra", work / "unknown.csv",
        "--out", work / "quantify")
print("outputs in", work)
