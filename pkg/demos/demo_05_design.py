"""
Mixture designs for calibration
===============================

Calibration mixtures are Scheffe simplex designs. Bounds on the proportions
are handled with the pseudo-component transform; rows that still break an
upper bound are dropped and the design is topped up with interior points.
"""

from revspec import design

names = ["SLES", "CAPB", "APG", "MGDA"]
lattice = design.simplex_lattice(4, 3, names)
print(f"lattice(4, 3): {len(lattice)} runs")
print(f"centroid(4): {len(design.simplex_centroid(4, names))} runs")
print("minimum runs for 3, 4, 5 components:", [design.minimum_runs(q) for q in (3, 4, 5)])

bounded = design.generate_design(names, bounds=[(0.2, 0.7), (0.05, 0.4), (0.05, 0.4), (0.0, 0.2)])
print(f"bounded design: {len(bounded)} runs, {len(bounded.rejected)} rejected by upper bounds")
for row in bounded.points[:5]:
    print("  " + "  ".join(f"{v:.3f}" for v in row))

# the actives can be diluted in water at a fixed total
diluted = design.add_diluent(bounded, 0.3, "water")
print(diluted.components, diluted.points[0].round(3))
