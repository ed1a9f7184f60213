"""Scheffe simplex mixture designs with lower/upper component bounds."""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_write_text, fmt
from .errors import InfeasibleBounds, InputError, UnsupportedQ

ROW_SUM_TOL = 1e-9

# smallest calibration design per component count; q=2 is a local convention
MINIMUM_RUNS = {2: 6, 3: 10, 4: 18, 5: 30}


@dataclass(frozen=True, eq=False)
class MixtureDesign:
    components: tuple
    points: np.ndarray
    bounds: tuple = field(default=())
    rejected: np.ndarray | None = None

    def __post_init__(self):
        P = np.array(self.points, dtype=float)
        if P.ndim != 2 or P.shape[1] != len(self.components):
            raise ValueError(f"points of shape {P.shape} for {len(self.components)} components")
        bounds = tuple(self.bounds) or tuple((0.0, 1.0) for _ in self.components)
        if len(bounds) != len(self.components):
            raise ValueError("one (lower, upper) pair per component")
        P.setflags(write=False)
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "bounds", tuple((float(lo), float(hi)) for lo, hi in bounds))
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def q(self) -> int:
        return len(self.components)

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, MixtureDesign)
            and self.components == other.components
            and self.bounds == other.bounds
            and np.array_equal(self.points, other.points)
        )

    def check(self, tol: float = ROW_SUM_TOL) -> None:
        """Raise ValueError if a row-sum, bound or uniqueness invariant fails."""
        P = self.points
        if np.any(np.abs(P.sum(axis=1) - 1) > tol):
            raise ValueError("design rows must sum to 1")
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        if np.any(P < lo - tol) or np.any(P > hi + tol):
            raise ValueError("design point outside component bounds")
        if len(_unique_rows(P, tol)) != len(P):
            raise ValueError("duplicate design points")


def _names(q: int, names: Sequence[str] | None) -> tuple:
    if names is None:
        return tuple(f"x{i + 1}" for i in range(q))
    if len(names) != q:
        raise ValueError(f"{len(names)} names for {q} components")
    return tuple(names)


def _unique_rows(P: np.ndarray, tol: float = ROW_SUM_TOL) -> np.ndarray:
    keep: list[np.ndarray] = []
    for row in P:
        if not any(np.max(np.abs(row - k)) <= tol for k in keep):
            keep.append(row)
    return np.array(keep).reshape(-1, P.shape[1])


def simplex_lattice(q: int, m: int, names: Sequence[str] | None = None) -> MixtureDesign:
    """{q, m} simplex-lattice: every composition with coordinates in multiples of 1/m."""
    if q < 2 or m < 1:
        raise ValueError("simplex lattice needs q >= 2 and m >= 1")
    pts = []
    # stars and bars: choose q-1 bar positions among m+q-1 slots
    for bars in itertools.combinations(range(m + q - 1), q - 1):
        edges = (-1,) + bars + (m + q - 1,)
        pts.append([edges[i + 1] - edges[i] - 1 for i in range(q)])
    P = np.array(pts, dtype=float)[::-1] / m
    return MixtureDesign(_names(q, names), P)


def simplex_centroid(q: int, names: Sequence[str] | None = None) -> MixtureDesign:
    """All 2^q - 1 centroids of nonempty component subsets, smallest subsets first."""
    if not 2 <= q <= 12:
        raise ValueError("simplex centroid supports 2 <= q <= 12")
    pts = []
    for k in range(1, q + 1):
        for subset in itertools.combinations(range(q), k):
            row = np.zeros(q)
            row[list(subset)] = 1.0 / k
            pts.append(row)
    return MixtureDesign(_names(q, names), np.array(pts))


def interior_points(q: int) -> list[np.ndarray]:
    """Augmentation groups, in the order they are added.

    Group 0 is the overall centroid; group k (1 <= k < q) holds the points
    halfway between the overall centroid and each k-component subset
    centroid (k = 1 gives the usual axial check blends).
    """
    centre = np.full(q, 1.0 / q)
    groups = [centre[None, :]]
    for k in range(1, q):
        rows = []
        for subset in itertools.combinations(range(q), k):
            sub = np.zeros(q)
            sub[list(subset)] = 1.0 / k
            rows.append(0.5 * (centre + sub))
        groups.append(np.array(rows))
    return groups


MAX_FILL_DEGREE = 12


def augment(design: MixtureDesign, n_min: int) -> MixtureDesign:
    """Add interior groups (see :func:`interior_points`) until ``n_min`` rows exist."""
    P = design.points
    for group in _candidate_groups(design.q):
        if len(P) >= n_min:
            break
        P = _unique_rows(np.vstack([P, group]))
    return MixtureDesign(design.components, P, design.bounds)


def _candidate_groups(q: int, max_degree: int = MAX_FILL_DEGREE):
    """Interior groups, then ever denser lattices once those run out."""
    yield from interior_points(q)
    for m in range(2, max_degree + 1):
        yield simplex_lattice(q, m).points


def minimum_runs(q: int) -> int:
    """Minimum number of calibration mixtures for ``q`` components."""
    try:
        return MINIMUM_RUNS[q]
    except KeyError:
        raise UnsupportedQ(f"minimum_runs defined for q in 2..5, got {q}") from None


def _check_bounds(q: int, bounds) -> tuple[np.ndarray, np.ndarray]:
    if len(bounds) != q:
        raise InfeasibleBounds(f"{len(bounds)} bounds for {q} components")
    lo = np.array([float(b[0]) for b in bounds])
    hi = np.array([float(b[1]) for b in bounds])
    for i, (a, b) in enumerate(zip(lo, hi)):
        if not 0 <= a <= b <= 1:
            raise InfeasibleBounds(f"component {i + 1}: need 0 <= lower ({a}) <= upper ({b}) <= 1")
    if lo.sum() >= 1:
        raise InfeasibleBounds(f"sum of lower bounds = {lo.sum():.6g} >= 1")
    if hi.sum() <= 1:
        raise InfeasibleBounds(f"sum of upper bounds = {hi.sum():.6g} <= 1")
    return lo, hi


def apply_bounds(design: MixtureDesign, bounds) -> MixtureDesign:
    """Map the design into the lower-bounded region with the pseudo-component
    transform ``x = lower + (1 - sum(lower)) * z``; rows that then break an
    upper bound are dropped and kept in ``rejected``.
    """
    lo, hi = _check_bounds(design.q, bounds)
    X = lo + (1.0 - lo.sum()) * design.points
    ok = np.all(X <= hi + ROW_SUM_TOL, axis=1)
    X = np.clip(X, lo, None)
    return MixtureDesign(
        design.components,
        X[ok],
        tuple(zip(lo, hi)),
        rejected=X[~ok],
    )


def generate_design(
    names: Sequence[str],
    kind: str = "lattice",
    degree: int = 3,
    bounds=None,
    n_min: int | None = None,
) -> MixtureDesign:
    """Build a calibration design that meets :func:`minimum_runs`.

    ``kind`` is ``lattice`` (degree ``degree``), ``centroid`` or
    ``centroid_augmented`` (centroid plus axial blends). Designs short of
    the minimum are augmented with interior points, then with denser
    lattices, until enough rows survive the bounds.
    """
    q = len(names)
    floor = minimum_runs(q) if n_min is None else n_min
    if kind == "lattice":
        base = simplex_lattice(q, degree, names)
    elif kind == "centroid":
        base = simplex_centroid(q, names)
    elif kind == "centroid_augmented":
        base = simplex_centroid(q, names)
        base = MixtureDesign(base.components, _unique_rows(np.vstack([base.points, interior_points(q)[1]])))
    else:
        raise InputError(f"unknown design kind {kind!r}")
    if bounds is None:
        return augment(base, floor)
    _check_bounds(q, bounds)
    P = base.points
    groups = _candidate_groups(q)
    while True:
        out = apply_bounds(MixtureDesign(base.components, P), bounds)
        if len(out) >= floor:
            return out
        nxt = next(groups, None)
        if nxt is None:
            return out
        P = _unique_rows(np.vstack([P, nxt]))


def add_diluent(design: MixtureDesign, active_total: float, name: str = "diluent") -> MixtureDesign:
    """Scale the active components to ``active_total`` and append a filler column."""
    if not 0 < active_total < 1:
        raise ValueError("active_total must be in (0, 1)")
    P = np.hstack([design.points * active_total, np.full((len(design), 1), 1.0 - active_total)])
    bounds = tuple((lo * active_total, hi * active_total) for lo, hi in design.bounds)
    bounds += ((1.0 - active_total, 1.0 - active_total),)
    return MixtureDesign(design.components + (name,), P, bounds)


# -- CSV -------------------------------------------------------------------------


def write_design(path, design: MixtureDesign) -> None:
    out = io.StringIO()
    for name, (lo, hi) in zip(design.components, design.bounds):
        out.write(f"#bounds: {name},{fmt(lo)},{fmt(hi)}\n")
    out.write(",".join(design.components) + "\n")
    for row in design.points:
        out.write(",".join(fmt(v) for v in row) + "\n")
    atomic_write_text(path, out.getvalue())


def read_design(path) -> MixtureDesign:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    bounds: dict[str, tuple[float, float]] = {}
    header = None
    rows = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith("#bounds:"):
                try:
                    name, lo, hi = [p.strip() for p in line[len("#bounds:"):].split(",")]
                    bounds[name] = (float(lo), float(hi))
                except ValueError:
                    raise InputError(f"{path}:{lineno}: malformed bounds line") from None
            continue
        fields = [p.strip() for p in line.split(",")]
        if header is None:
            header = fields
            continue
        if len(fields) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} values, got {len(fields)}")
        try:
            vals = [float(v) for v in fields]
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric design value") from None
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"{path}:{lineno}: non-finite design value")
        rows.append(vals)
    if header is None:
        raise InputError(f"{path}: no header row")
    P = np.array(rows, dtype=float).reshape(-1, len(header))
    b = tuple(bounds.get(n, (0.0, 1.0)) for n in header)
    return MixtureDesign(tuple(header), P, b)
