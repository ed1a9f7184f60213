"""
Blind source separation with InfoMax ICA
========================================

Ten mixtures of three band spectra are unmixed without knowing the
proportions. Recovered sources are compared with the truth through the
best one-to-one pairing of absolute correlations, since ICA cannot know
the order or sign of its components.
"""

import numpy as np

from revspec import bss, synth
from revspec.design import simplex_lattice
from revspec.spectra import WavenumberAxis

axis = WavenumberAxis.default()
S0 = np.vstack([synth.generate_material(seed=s, axis=axis).pure_spectrum(axis).intensities for s in (1, 2, 3)])
A0 = simplex_lattice(3, 3).points  # 10 mixtures
X = A0 @ S0

model = bss.fit_infomax(X, f=3, seed=0)
print(f"converged: {model.converged} after {model.iterations} iterations")
print(f"relative reconstruction error: {model.residual / np.linalg.norm(X):.2e}")

C = bss.abs_correlation(model.S, S0)
for ic, true, r in bss.greedy_match(C):
    print(f"IC{ic + 1} <-> source {true + 1}: |r| = {r:.4f}")

# the mixing matrix follows by least squares once the sources are known
A, res = bss.estimate_mixing(X, S0)
print("mixing recovered to", np.abs(A - A0).max())
