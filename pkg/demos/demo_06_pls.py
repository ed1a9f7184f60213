"""
PLS calibration and quantification
==================================

Spectra of the design mixtures are regressed on their compositions with
NIPALS PLS. The number of latent variables comes from leave-one-out
cross-validation; held-out mixtures check the model.
"""

import numpy as np

from revspec import pls, synth
from revspec.design import generate_design
from revspec.spectra import WavenumberAxis

axis = WavenumberAxis.default()
names = ["SLES", "CAPB", "APG", "MGDA"]
materials = [synth.generate_material(seed=40 + i, axis=axis, name=n) for i, n in enumerate(names)]
d = generate_design(names)
X = synth.mix_batch(materials, d.points, noise_sigma=0.01, seed=1, axis=axis)
Y = 100 * d.points  # percent

cv = pls.cross_validate(X, Y, lv_max=8)
print("pooled RMSECV by latent variables:", np.round(cv.rmsecv_total, 3))
model = pls.fit_nipals(X, Y, cv.selected, response_names=names)

test = np.array([[0.40, 0.30, 0.20, 0.10], [0.70, 0.10, 0.20, 0.00]])
Xt = synth.mix_batch(materials, test, noise_sigma=0.01, seed=2, axis=axis)
report = pls.metrics(model, X, Y, Xt, 100 * test, cv_result=cv)
print(report.to_text())
print("predicted (%):")
print(np.array2string(pls.predict(model, Xt), precision=2, suppress_small=True))
