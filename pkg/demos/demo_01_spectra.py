"""
Spectra, resampling and scatter correction
==========================================

Spectra live on a ``WavenumberAxis``. Anything recorded on another grid is
resampled onto it, then SNV and MSC take out intensity and baseline
differences that have nothing to do with composition.
"""

import numpy as np

from revspec import spectra, synth

axis = spectra.WavenumberAxis.default()
print(f"default axis: {axis.values[0]:g}..{axis.values[-1]:g} cm-1, {len(axis)} points, step {axis.step:g}")

# a synthetic raw material, its pure spectrum on a finer grid, and the same
# spectrum brought back to the working axis
material = synth.generate_material(seed=7, axis=axis, n_bands=6, name="demo")
fine = spectra.WavenumberAxis.from_range(150, 3478, 1)
on_fine = material.pure_spectrum(fine)
back = spectra.resample(on_fine, axis)
print("max resampling difference:", np.abs(back.intensities - material.pure_spectrum(axis).intensities).max())

# MSC undoes an affine scatter effect exactly
ref = material.pure_spectrum(axis)
scattered = ref.with_intensities(2.7 * ref.intensities - 0.4)
slope, intercept = spectra.msc_fit(scattered.intensities, ref.intensities)
print(f"fitted slope {slope:.6f}, intercept {intercept:.6f}")
print("MSC residual:", np.abs(spectra.msc_correct(scattered, ref).intensities - ref.intensities).max())

# SNV: zero mean, unit norm
snv = spectra.normalize(scattered)
print(f"SNV mean {snv.intensities.mean():.1e}, norm {np.linalg.norm(snv.intensities):.12f}")
