"""Blind source separation of spectral mixtures.

Rows of ``X`` (``s x n``) are mixture spectra; the ``n`` wavenumber points are
the observations. The model is ``X = A S`` with ``S`` holding ``f`` source
spectra, estimated as ``S = W X``.

InfoMax here extracts one direction at a time in the whitened space by
gradient ascent on the mean log-density of the logistic distribution,
``mean(log g'(w.z))`` with ``g`` the logistic sigmoid, and Gram-Schmidt
deflation against the directions already found.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .errors import ConvergenceWarning, RankDeficient, SingularSources, TooFewSamples
from .spectra import SpectrumMatrix, WavenumberAxis, as_array, read_matrix, write_matrix

EIG_RTOL = 1e-10
MAX_COND = 1e12


@dataclass(frozen=True, eq=False)
class WhiteningTransform:
    mean: np.ndarray  # per-row (length s) mean over wavenumbers
    projection: np.ndarray  # f x s
    explained_variance: np.ndarray  # ratio per kept component
    eigenvalues: np.ndarray  # all s eigenvalues, descending

    def apply(self, X) -> np.ndarray:
        X = as_array(X)
        return self.projection @ (X - X.mean(axis=1, keepdims=True))


@dataclass(frozen=True, eq=False)
class IcaModel:
    f: int
    W: np.ndarray  # f x s
    S: np.ndarray  # f x n, unit-norm rows
    A: np.ndarray  # s x f
    converged: bool
    iterations: int
    residual: float  # ||X - A S||_F
    seed: int | None = None
    rotation: np.ndarray | None = None  # f x f, rows are whitened-domain directions
    axis: WavenumberAxis | None = None

    def __eq__(self, other):
        if not isinstance(other, IcaModel):
            return NotImplemented
        return (
            self.f == other.f
            and self.converged == other.converged
            and self.iterations == other.iterations
            and self.residual == other.residual
            and self.seed == other.seed
            and all(np.array_equal(a, b) for a, b in ((self.W, other.W), (self.S, other.S), (self.A, other.A)))
        )


@dataclass(frozen=True)
class IcaOptions:
    max_iter: int = 500
    tol: float = 1e-6
    seed: int = 0
    step: float = 1.0


@dataclass
class IcaByBlocksReport:
    B: int
    tested_orders: list
    correlation_table: dict  # f -> list of matched |corr| (min over block pairs, per IC)
    optimal_f: int
    threshold: float
    blocks: list = field(default_factory=list)

    def min_correlation(self, f: int) -> float:
        return float(min(self.correlation_table[f]))

    def to_rows(self) -> list[list]:
        """Flat table: one row per order, matched correlations sorted descending."""
        fmax = max(self.tested_orders)
        rows = []
        for f in self.tested_orders:
            vals = sorted(self.correlation_table[f], reverse=True)
            rows.append([f] + vals + [None] * (fmax - len(vals)))
        return rows


def whiten(X, f: int) -> tuple[np.ndarray, WhiteningTransform]:
    """PCA-whiten the rows of ``X`` down to ``f`` components.

    Each row is centered over wavenumbers; the ``s x s`` covariance is
    eigendecomposed and the top ``f`` directions are scaled to unit variance.
    """
    X = as_array(X)
    s, n = X.shape
    if not 1 <= f <= min(s, n):
        raise ValueError(f"f={f} must lie in [1, {min(s, n)}]")
    mean = X.mean(axis=1)
    Xc = X - mean[:, None]
    C = Xc @ Xc.T / n
    lam, E = np.linalg.eigh(C)
    order = np.argsort(lam)[::-1]
    lam, E = lam[order], E[:, order]
    if lam[0] <= 0:
        raise RankDeficient("data matrix is constant")
    nonzero = int(np.sum(lam > EIG_RTOL * lam[0]))
    if nonzero < f:
        raise RankDeficient(f"only {nonzero} nonzero eigenvalues, {f} components requested")
    # fix eigenvector signs for reproducibility across LAPACK builds
    E = E * np.where(E[np.argmax(np.abs(E), axis=0), np.arange(s)] < 0, -1.0, 1.0)
    P = (E[:, :f] / np.sqrt(lam[:f])).T
    ratios = lam[:f] / lam[lam > 0].sum()
    tr = WhiteningTransform(mean, P, ratios, lam)
    return P @ Xc, tr


def _logistic_objective(y: np.ndarray) -> float:
    # mean log g'(y) for the logistic g: log g' = -|y| - 2 log(1 + exp(-|y|))
    a = np.abs(y)
    return float(np.mean(-a - 2.0 * np.log1p(np.exp(-a))))


def _logistic_gradient(w: np.ndarray, Z: np.ndarray) -> np.ndarray:
    y = w @ Z
    # d/dy log g'(y) = 1 - 2 g(y) = -tanh(y/2)
    return Z @ (-np.tanh(0.5 * y)) / Z.shape[1]


def _gram_schmidt(w: np.ndarray, basis: list) -> np.ndarray:
    for b in basis:
        w = w - (w @ b) * b
    return w / np.linalg.norm(w)


def _extract_direction(Z, basis, w0, opts: IcaOptions) -> tuple[np.ndarray, int, bool]:
    w = _gram_schmidt(w0, basis)
    if not basis and Z.shape[0] == 1:
        return w, 0, True
    if len(basis) == Z.shape[0] - 1:
        # the orthogonal complement is one-dimensional: nothing to optimise
        return w, 0, True
    step = opts.step
    obj = _logistic_objective(w @ Z)
    for it in range(1, opts.max_iter + 1):
        g = _logistic_gradient(w, Z)
        g = g - (g @ w) * w
        while True:
            cand = _gram_schmidt(w + step * g, basis)
            cand_obj = _logistic_objective(cand @ Z)
            if cand_obj >= obj or step < 1e-12:
                break
            step *= 0.5
        change = np.linalg.norm(cand - w)
        w, obj = cand, cand_obj
        step *= 1.2
        if change < opts.tol:
            return w, it, True
    return w, opts.max_iter, False


def _fix_sources(W: np.ndarray, S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(S, axis=1)
    if np.any(norms == 0):
        raise RankDeficient("an extracted source is identically zero")
    sign = np.sign(S[np.arange(S.shape[0]), np.argmax(np.abs(S), axis=1)])
    scale = sign / norms
    return W * scale[:, None], S * scale[:, None]


def estimate_mixing(X, S) -> tuple[np.ndarray, float]:
    """Least-squares mixing matrix ``A = X S^T (S S^T)^-1``.

    Returns ``(A, residual)`` with ``residual = ||X - A S||_F``.
    """
    X, S = as_array(X), as_array(S)
    G = S @ S.T
    if np.linalg.cond(G) >= MAX_COND:
        raise SingularSources(f"S S^T is numerically singular (cond={np.linalg.cond(G):.3g})")
    A = np.linalg.solve(G, S @ X.T).T
    return A, float(np.linalg.norm(X - A @ S))


def fit_infomax(X, f: int, opts: IcaOptions | None = None, **kwargs) -> IcaModel:
    """Fit an ``f``-component InfoMax ICA model to the rows of ``X``.

    Keyword arguments override fields of ``opts`` (``max_iter``, ``tol``,
    ``seed``, ``step``). When the tolerance is not reached the model is
    still returned with ``converged=False`` and a ConvergenceWarning.
    """
    opts = IcaOptions(**{**(opts.__dict__ if opts else {}), **kwargs})
    axis = X.axis if isinstance(X, SpectrumMatrix) else None
    X = as_array(X)
    Z, tr = whiten(X, f)
    rng = np.random.default_rng(opts.seed)
    basis: list = []
    total_it, converged = 0, True
    for _ in range(f):
        w0 = rng.standard_normal(f)
        w, it, ok = _extract_direction(Z, basis, w0 / np.linalg.norm(w0), opts)
        basis.append(w)
        total_it += it
        converged &= ok
    R = np.vstack(basis)
    W, S = _fix_sources(R @ tr.projection, R @ tr.projection @ X)
    A, residual = estimate_mixing(X, S)
    if not converged:
        warnings.warn(
            f"InfoMax stopped at max_iter={opts.max_iter} before tol={opts.tol}",
            ConvergenceWarning,
            stacklevel=2,
        )
    return IcaModel(f, W, S, A, converged, total_it, residual, opts.seed, R, axis)


def abs_correlation(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """|Pearson correlation| between every row of ``P`` and every row of ``Q``."""
    Pc = P - P.mean(axis=1, keepdims=True)
    Qc = Q - Q.mean(axis=1, keepdims=True)
    Pc = Pc / np.linalg.norm(Pc, axis=1, keepdims=True)
    Qc = Qc / np.linalg.norm(Qc, axis=1, keepdims=True)
    return np.abs(Pc @ Qc.T)


def greedy_match(C: np.ndarray) -> list[tuple[int, int, float]]:
    """Pair rows and columns of a score matrix by repeatedly taking the maximum."""
    C = np.array(C, dtype=float)
    pairs = []
    for _ in range(min(C.shape)):
        i, j = np.unravel_index(np.argmax(C), C.shape)
        pairs.append((int(i), int(j), float(C[i, j])))
        C[i, :] = -np.inf
        C[:, j] = -np.inf
    return pairs


def split_blocks(s: int, B: int) -> list[np.ndarray]:
    """Row indices of ``B`` contiguous blocks whose sizes differ by at most one."""
    return np.array_split(np.arange(s), B)


def ica_by_blocks(
    X,
    B: int = 2,
    f_max: int = 6,
    opts: IcaOptions | None = None,
    *,
    threshold: float = 0.80,
    workers: int | None = None,
) -> IcaByBlocksReport:
    """Choose the number of independent components by split-sample agreement.

    For ``f = 1 .. f_max`` an ICA model is fitted on each row block and the
    components of every pair of blocks are matched greedily on |correlation|.
    The selected order is the largest ``f`` whose weakest matched correlation
    reaches ``threshold``. Orders a block is too low-rank to support score zero.
    """
    opts = opts or IcaOptions()
    X = as_array(X)
    s, n = X.shape
    if B < 2 or s < 2 * B:
        raise TooFewSamples(f"{s} spectra cannot form {B} blocks of at least 2 rows")
    blocks = split_blocks(s, B)
    limit = min(min(len(b) for b in blocks), n)
    if not 1 <= f_max <= limit:
        raise TooFewSamples(f"f_max={f_max} exceeds the smallest block size limit {limit}")
    orders = list(range(1, f_max + 1))
    keys = [(bi, f) for bi in range(B) for f in orders]

    def fit(key):
        bi, f = key
        try:
            return fit_infomax(X[blocks[bi]], f, opts).S
        except RankDeficient:
            # the block cannot support f components: the order fails outright
            return None

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        if workers and workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                sources = dict(zip(keys, pool.map(fit, keys)))
        else:
            sources = {k: fit(k) for k in keys}

    table = {}
    for f in orders:
        if any(sources[(bi, f)] is None for bi in range(B)):
            table[f] = [0.0] * f
            continue
        per_ic = None
        for b1 in range(B):
            for b2 in range(b1 + 1, B):
                pairs = greedy_match(abs_correlation(sources[(b1, f)], sources[(b2, f)]))
                vals = np.array(sorted(p[2] for p in pairs))[::-1]
                per_ic = vals if per_ic is None else np.minimum(per_ic, vals)
        table[f] = [float(min(max(v, 0.0), 1.0)) for v in per_ic]
    passing = [f for f in orders if min(table[f]) >= threshold]
    optimal = max(passing) if passing else 1
    return IcaByBlocksReport(B, orders, table, optimal, threshold, [b.tolist() for b in blocks])


# -- persistence ---------------------------------------------------------------


def save_ica_model(directory, model: IcaModel, axis: WavenumberAxis, sample_labels=None) -> dict:
    """Write ``sources.csv``, ``mixing.csv`` and ``ica_model.json`` to ``directory``."""
    d = Path(directory)
    ic_labels = tuple(f"IC{i + 1}" for i in range(model.f))
    write_matrix(d / "sources.csv", SpectrumMatrix(axis, model.S, ic_labels))
    lines = ["sample," + ",".join(ic_labels)]
    labels = sample_labels or [f"sample_{i + 1}" for i in range(model.A.shape[0])]
    for lab, row in zip(labels, model.A):
        lines.append(lab + "," + ",".join(repr(float(v)) for v in row))
    atomic_write_text(d / "mixing.csv", "\n".join(lines) + "\n")
    meta = {
        "f": model.f,
        "converged": bool(model.converged),
        "iterations": int(model.iterations),
        "residual": model.residual,
        "seed": model.seed,
        "unmixing": model.W.tolist(),
    }
    atomic_write_text(d / "ica_model.json", json.dumps(meta, indent=2) + "\n")
    return meta


def load_ica_model(directory) -> IcaModel:
    d = Path(directory)
    meta = json.loads((d / "ica_model.json").read_text(encoding="utf-8"))
    S = read_matrix(d / "sources.csv")
    rows = (d / "mixing.csv").read_text(encoding="utf-8").strip().splitlines()[1:]
    A = np.array([[float(v) for v in r.split(",")[1:]] for r in rows])
    return IcaModel(
        int(meta["f"]),
        np.array(meta["unmixing"], dtype=float),
        S.rows.copy(),
        A,
        bool(meta["converged"]),
        int(meta["iterations"]),
        float(meta["residual"]),
        meta.get("seed"),
        None,
        S.axis,
    )
