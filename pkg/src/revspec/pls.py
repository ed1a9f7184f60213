"""NIPALS partial least squares regression with cross-validation and
calibration/prediction metrics (RMSEC, RMSECV, RMSEP, R2Y, Q2Y).

``X`` is centered only (band intensities keep their relative weight);
``Y`` is centered and scaled to unit variance.
"""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_write_text, fmt
from .errors import (
    AxisMismatch,
    ConvergenceWarning,
    FoldTooSmall,
    ZeroVarianceColumn,
)
from .spectra import SpectrumMatrix, as_array

NIPALS_TOL = 1e-10
NIPALS_MAX_ITER = 1000
# residual X below this fraction of the centered X norm has no usable rank left
RANK_RTOL = 1e-10
PARSIMONY = 0.05


@dataclass(eq=False)
class PlsModel:
    n_lv: int
    x_weights: np.ndarray  # n x a
    x_loadings: np.ndarray  # n x a
    y_loadings: np.ndarray  # r x a (scaled Y units)
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: np.ndarray
    y_scale: np.ndarray
    regression_coefficients: np.ndarray  # n x r, original units
    converged: list = field(default_factory=list)
    n_lv_requested: int | None = None
    response_names: tuple = ()
    wavenumbers: np.ndarray | None = None
    x_scores: np.ndarray | None = None  # training scores, not persisted
    fitted: np.ndarray | None = None  # training predictions, not persisted

    def __eq__(self, other):
        if not isinstance(other, PlsModel):
            return NotImplemented
        arrays = (
            "x_weights", "x_loadings", "y_loadings", "x_mean", "x_scale",
            "y_mean", "y_scale", "regression_coefficients",
        )
        same_axis = (self.wavenumbers is None and other.wavenumbers is None) or (
            self.wavenumbers is not None
            and other.wavenumbers is not None
            and np.array_equal(self.wavenumbers, other.wavenumbers)
        )
        return (
            self.n_lv == other.n_lv
            and self.response_names == other.response_names
            and list(self.converged) == list(other.converged)
            and same_axis
            and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
        )


@dataclass(frozen=True)
class CvScheme:
    kind: str = "loo"  # "loo" or "venetian"
    k: int = 5

    def __post_init__(self):
        if self.kind not in ("loo", "venetian"):
            raise ValueError(f"unknown CV scheme {self.kind!r}")
        if self.kind == "venetian" and self.k < 2:
            raise ValueError("venetian blinds need k >= 2")

    @classmethod
    def default_for(cls, s: int) -> "CvScheme":
        return cls("loo") if s <= 30 else cls("venetian", 5)

    def folds(self, s: int) -> list[np.ndarray]:
        """Held-out index sets; together they partition ``range(s)``."""
        idx = np.arange(s)
        if self.kind == "loo":
            return [idx[i:i + 1] for i in range(s)]
        return [idx[j::self.k] for j in range(min(self.k, s))]


@dataclass
class CvResult:
    lvs: np.ndarray  # tested latent-variable counts, starting at 0
    rmsecv: np.ndarray  # len(lvs) x r
    press: np.ndarray  # len(lvs) x r
    sstot: np.ndarray  # r
    selected: int
    predictions: dict  # lv -> s x r cross-validated predictions

    @property
    def rmsecv_total(self) -> np.ndarray:
        """Pooled RMSECV over all responses, per tested LV count."""
        return np.sqrt(np.mean(self.rmsecv ** 2, axis=1))

    def q2y(self, lv: int) -> np.ndarray:
        return 1.0 - self.press[lv] / self.sstot


@dataclass
class MetricsReport:
    responses: tuple
    n_lv: int
    rmsec: np.ndarray
    rmsecv: np.ndarray
    rmsep: np.ndarray | None
    r2y: np.ndarray
    q2y: np.ndarray
    flags: list = field(default_factory=list)

    def table(self) -> list[list]:
        rows = []
        for i, name in enumerate(self.responses):
            rows.append([
                name,
                float(self.rmsec[i]),
                float(self.rmsecv[i]),
                None if self.rmsep is None else float(self.rmsep[i]),
                float(self.r2y[i]),
                float(self.q2y[i]),
            ])
        return rows

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("response,RMSEC,RMSECV,RMSEP,R2Y,Q2Y\n")
        for row in self.table():
            out.write(",".join([row[0]] + ["" if v is None else fmt(v) for v in row[1:]]) + "\n")
        return out.getvalue()

    def to_text(self) -> str:
        """Aligned table in the layout of a chemometrics calibration summary."""
        w = max([len("Response")] + [len(r) for r in self.responses])
        head = f"{'Response':<{w}}  {'RMSEC':>8}  {'RMSECV':>8}  {'RMSEP':>8}  {'R2Y':>6}  {'Q2Y':>6}"
        lines = [head, "-" * len(head)]
        for name, c, cv, p, r2, q2 in self.table():
            ptxt = "n/a" if p is None else f"{p:.3f}"
            lines.append(f"{name:<{w}}  {c:>8.3f}  {cv:>8.3f}  {ptxt:>8}  {r2:>6.3f}  {q2:>6.3f}")
        return "\n".join(lines) + "\n"


def _as_2d_y(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def fit_nipals(
    X,
    Y,
    n_lv: int,
    *,
    tol: float = NIPALS_TOL,
    max_iter: int = NIPALS_MAX_ITER,
    response_names: Sequence[str] | None = None,
) -> PlsModel:
    """PLS2 by NIPALS.

    If the centered ``X`` runs out of rank before ``n_lv`` latent variables,
    fitting stops early; ``n_lv`` then holds the count actually used and
    ``n_lv_requested`` the count asked for.
    """
    wavenumbers = X.axis.values.copy() if isinstance(X, SpectrumMatrix) else None
    X = as_array(X)
    Y = _as_2d_y(Y)
    s, n = X.shape
    if Y.shape[0] != s:
        raise ValueError(f"X has {s} rows but Y has {Y.shape[0]}")
    if s < 2:
        raise FoldTooSmall("PLS needs at least 2 samples")
    if not 0 <= n_lv <= min(s - 1, n):
        raise ValueError(f"n_lv={n_lv} must lie in [0, {min(s - 1, n)}]")
    r = Y.shape[1]
    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    y_scale = Y.std(axis=0, ddof=1)
    if np.any(y_scale <= 1e-12 * np.maximum(np.abs(y_mean), 1.0)):
        bad = [int(i) for i in np.flatnonzero(y_scale <= 1e-12 * np.maximum(np.abs(y_mean), 1.0))]
        raise ZeroVarianceColumn(f"response column(s) {bad} have zero variance")
    E = X - x_mean
    norm0 = np.linalg.norm(E)
    if norm0 == 0:
        raise ZeroVarianceColumn("X has zero variance in every column")
    F = (Y - y_mean) / y_scale

    Wm, Pm, Cm, Tm, conv = [], [], [], [], []
    for a in range(n_lv):
        if np.linalg.norm(E) <= RANK_RTOL * norm0:
            break
        u = F[:, np.argmax(np.sum(F ** 2, axis=0))].copy()
        t_old = None
        ok = False
        for _ in range(max_iter):
            w = E.T @ u
            w /= np.linalg.norm(w)
            t = E @ w
            c = F.T @ t / (t @ t)
            u = F @ c / (c @ c) if c @ c > 0 else t
            if t_old is not None and np.linalg.norm(t - t_old) <= tol * np.linalg.norm(t):
                ok = True
                break
            t_old = t
        if not ok:
            warnings.warn(f"NIPALS LV {a + 1} did not converge in {max_iter} iterations",
                          ConvergenceWarning, stacklevel=2)
        p = E.T @ t / (t @ t)
        E = E - np.outer(t, p)
        F = F - np.outer(t, c)
        Wm.append(w)
        Pm.append(p)
        Cm.append(c)
        Tm.append(t)
        conv.append(ok)

    a_used = len(Wm)
    Wm = np.array(Wm).T.reshape(n, a_used)
    Pm = np.array(Pm).T.reshape(n, a_used)
    Cm = np.array(Cm).T.reshape(r, a_used)
    Tm = np.array(Tm).T.reshape(s, a_used)
    if a_used:
        B = Wm @ np.linalg.solve(Pm.T @ Wm, Cm.T) * y_scale
    else:
        B = np.zeros((n, r))
    names = tuple(response_names) if response_names is not None else tuple(f"y{i + 1}" for i in range(r))
    model = PlsModel(
        n_lv=a_used,
        x_weights=Wm,
        x_loadings=Pm,
        y_loadings=Cm,
        x_mean=x_mean,
        x_scale=np.ones(n),
        y_mean=y_mean,
        y_scale=y_scale,
        regression_coefficients=B,
        converged=conv,
        n_lv_requested=n_lv,
        response_names=names,
        wavenumbers=wavenumbers,
        x_scores=Tm,
    )
    model.fitted = predict(model, X)
    return model


def fit_pls1(X, Y, n_lv: int, **kwargs) -> list[PlsModel]:
    """One single-response model per column of ``Y``."""
    Y = _as_2d_y(Y)
    names = kwargs.pop("response_names", None) or [f"y{i + 1}" for i in range(Y.shape[1])]
    return [fit_nipals(X, Y[:, j], n_lv, response_names=[names[j]], **kwargs) for j in range(Y.shape[1])]


def predict(model: PlsModel, X, *, clip: bool = False) -> np.ndarray:
    """Predicted responses for the rows of ``X``; optional clipping to [0, 100]."""
    if isinstance(X, SpectrumMatrix) and model.wavenumbers is not None:
        if not np.array_equal(X.axis.values, model.wavenumbers):
            raise AxisMismatch("spectra are not on the calibration wavenumber axis")
    X = as_array(X)
    if X.shape[1] != model.x_mean.size:
        raise AxisMismatch(f"spectra have {X.shape[1]} points, model expects {model.x_mean.size}")
    Yhat = (X - model.x_mean) / model.x_scale @ model.regression_coefficients + model.y_mean
    return np.clip(Yhat, 0.0, 100.0) if clip else Yhat


def predict_pls1(models: Sequence[PlsModel], X) -> np.ndarray:
    return np.hstack([predict(m, X) for m in models])


def rmse(Y, Yhat) -> np.ndarray:
    return np.sqrt(np.mean((_as_2d_y(Y) - _as_2d_y(Yhat)) ** 2, axis=0))


def max_lv_for(s: int, n: int, scheme: CvScheme) -> int:
    biggest = max(len(f) for f in scheme.folds(s))
    return min(s - biggest - 1, n)


def cross_validate(X, Y, scheme: CvScheme | None = None, lv_max: int = 10) -> CvResult:
    """RMSECV for 0..lv_max latent variables and the parsimonious choice.

    The selected count is the smallest one whose pooled RMSECV is within 5 %
    of the minimum over all tested counts.
    """
    X = as_array(X)
    Y = _as_2d_y(Y)
    s, n = X.shape
    scheme = scheme or CvScheme.default_for(s)
    folds = scheme.folds(s)
    allowed = max_lv_for(s, n, scheme)
    if s < 3 or allowed < 0:
        raise FoldTooSmall(f"{s} samples are too few for {scheme.kind} cross-validation")
    if lv_max > allowed:
        raise FoldTooSmall(f"lv_max={lv_max} exceeds {allowed} for {s} samples under {scheme.kind}")
    lvs = np.arange(lv_max + 1)
    preds = {int(a): np.zeros_like(Y) for a in lvs}
    for held in folds:
        keep = np.setdiff1d(np.arange(s), held)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            for a in lvs:
                m = fit_nipals(X[keep], Y[keep], int(a))
                preds[int(a)][held] = predict(m, X[held])
    press = np.array([np.sum((Y - preds[int(a)]) ** 2, axis=0) for a in lvs])
    rmsecv = np.sqrt(press / s)
    sstot = np.sum((Y - Y.mean(axis=0)) ** 2, axis=0)
    pooled = np.sqrt(np.mean(rmsecv ** 2, axis=1))
    best = pooled.min()
    selected = int(lvs[np.flatnonzero(pooled <= best * (1 + PARSIMONY) + 1e-300)[0]])
    return CvResult(lvs, rmsecv, press, sstot, selected, preds)


def metrics(
    model: PlsModel,
    X_cal,
    Y_cal,
    X_test=None,
    Y_test=None,
    cv: CvScheme | None = None,
    *,
    cv_result: CvResult | None = None,
) -> MetricsReport:
    """Calibration, cross-validation and prediction statistics per response."""
    Xc = as_array(X_cal)
    Yc = _as_2d_y(Y_cal)
    flags = []
    fit = predict(model, Xc)
    rmsec = rmse(Yc, fit)
    sstot = np.sum((Yc - Yc.mean(axis=0)) ** 2, axis=0)
    r2y = 1.0 - np.sum((Yc - fit) ** 2, axis=0) / sstot
    if cv_result is None or cv_result.lvs.max() < model.n_lv:
        cv_result = cross_validate(Xc, Yc, cv, model.n_lv)
    rmsecv = cv_result.rmsecv[model.n_lv]
    q2y = cv_result.q2y(model.n_lv)
    if X_test is None or Y_test is None or len(as_array(X_test)) == 0:
        rmsep = None
        flags.append("EmptyTestSet: RMSEP omitted")
    else:
        rmsep = rmse(Y_test, predict(model, X_test))
    for name, q, r in zip(model.response_names, q2y, r2y):
        if q > r + 0.2:
            flags.append(f"{name}: Q2Y exceeds R2Y by more than 0.2")
    return MetricsReport(tuple(model.response_names), model.n_lv, rmsec, rmsecv, rmsep, r2y, q2y, flags)


# -- persistence ---------------------------------------------------------------


def _write_columns(path, header: Sequence[str], M: np.ndarray, index=None, index_name="row"):
    out = io.StringIO()
    out.write(",".join([index_name, *header]) + "\n")
    idx = index if index is not None else range(M.shape[0])
    for i, row in zip(idx, M):
        out.write(",".join([fmt(i) if not isinstance(i, (int, np.integer)) else str(i)] + [fmt(v) for v in row]) + "\n")
    atomic_write_text(path, out.getvalue())


def _read_columns(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = lines[0].split(",")[1:]
    body = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    arr = np.array(body, dtype=float).reshape(len(body), len(header) + 1)
    return header, arr[:, 0], arr[:, 1:]


def save_model(directory, model: PlsModel) -> None:
    """JSON sidecar plus CSV matrices (coefficients, weights, loadings)."""
    d = Path(directory)
    n, r = model.regression_coefficients.shape
    lv_names = [f"LV{i + 1}" for i in range(model.n_lv)]
    index = model.wavenumbers if model.wavenumbers is not None else np.arange(n)
    idx_name = "wavenumber_cm1" if model.wavenumbers is not None else "variable"
    _write_columns(d / "coefficients.csv", model.response_names, model.regression_coefficients, index, idx_name)
    _write_columns(d / "x_weights.csv", lv_names, model.x_weights, index, idx_name)
    _write_columns(d / "x_loadings.csv", lv_names, model.x_loadings, index, idx_name)
    meta = {
        "n_variables": n,
        "n_responses": r,
        "n_lv": model.n_lv,
        "n_lv_requested": model.n_lv_requested,
        "converged": [bool(c) for c in model.converged],
        "response_names": list(model.response_names),
        "x_mean": model.x_mean.tolist(),
        "x_scale": model.x_scale.tolist(),
        "y_mean": model.y_mean.tolist(),
        "y_scale": model.y_scale.tolist(),
        "y_loadings": model.y_loadings.tolist(),
    }
    atomic_write_text(d / "pls_model.json", json.dumps(meta, indent=2) + "\n")


def load_model(directory) -> PlsModel:
    d = Path(directory)
    meta = json.loads((d / "pls_model.json").read_text(encoding="utf-8"))
    _, index, B = _read_columns(d / "coefficients.csv")
    header = (d / "coefficients.csv").read_text(encoding="utf-8").split(",", 1)[0]
    n, a, r = meta["n_variables"], meta["n_lv"], meta["n_responses"]
    _, _, Wm = _read_columns(d / "x_weights.csv")
    _, _, Pm = _read_columns(d / "x_loadings.csv")
    return PlsModel(
        n_lv=a,
        x_weights=Wm.reshape(n, a),
        x_loadings=Pm.reshape(n, a),
        y_loadings=np.array(meta["y_loadings"], dtype=float).reshape(r, a),
        x_mean=np.array(meta["x_mean"], dtype=float),
        x_scale=np.array(meta["x_scale"], dtype=float),
        y_mean=np.array(meta["y_mean"], dtype=float),
        y_scale=np.array(meta["y_scale"], dtype=float),
        regression_coefficients=B.reshape(n, r),
        converged=list(meta["converged"]),
        n_lv_requested=meta.get("n_lv_requested"),
        response_names=tuple(meta["response_names"]),
        wavenumbers=index if header == "wavenumber_cm1" else None,
    )
