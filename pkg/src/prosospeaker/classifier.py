"""Kernel SVM: SMO training, decision scores, grid search and model files."""

from __future__ import annotations

import itertools
import logging
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import archive
from .features import FeatureVector, Standardizer, feature_variance, fit_standardizer
from .metrics import balanced_accuracy

log = logging.getLogger(__name__)

REAL, DF = "REAL", "DF"
LABEL_MAP = {-1: REAL, 1: DF}
KERNELS = ("rbf", "polynomial", "sigmoid")
GAMMA_MODES = ("uniform", "scaled")
DEFAULT_C = (0.01, 0.1, 1.0, 10.0, 100.0)

KKT_TOL = 1e-3
FULL_GRAM_MAX_ROWS = 8000
_TAU = 1e-12  # curvature floor for non-PSD kernels


class SvmError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: float = 1.0
    degree: int = 3
    coef0: float = 0.0

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise SvmError(f"unknown kernel {self.kind!r}; choose from {KERNELS}")
        if not self.gamma > 0:
            raise SvmError(f"gamma must be positive, got {self.gamma}")

    def matrix(self, A, B) -> np.ndarray:
        """Kernel values between all rows of ``A`` and all rows of ``B``."""
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        if A.shape[1] != B.shape[1]:
            raise SvmError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
        if self.kind == "rbf":
            sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
            return np.exp(-self.gamma * np.maximum(sq, 0.0))
        dot = A @ B.T
        if self.kind == "polynomial":
            return (self.gamma * dot + self.coef0) ** self.degree
        return np.tanh(self.gamma * dot + self.coef0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma, "degree": self.degree, "coef0": self.coef0}


def kernel_eval(k: KernelSpec, u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise SvmError(f"kernel arguments must be equal-length vectors, got {u.shape} and {v.shape}")
    if k.kind == "rbf":
        d = u - v
        return float(np.exp(-k.gamma * (d @ d)))
    if k.kind == "polynomial":
        return float((k.gamma * (u @ v) + k.coef0) ** k.degree)
    return float(np.tanh(k.gamma * (u @ v) + k.coef0))


class _QMatrix:
    """Rows of Q_ij = y_i y_j K(x_i, x_j): dense up to a size limit, LRU-cached above."""

    def __init__(self, X, y, kernel: KernelSpec, cache_rows: int = 1024):
        self.X, self.y, self.kernel = X, y, kernel
        n = X.shape[0]
        if n <= FULL_GRAM_MAX_ROWS:
            self.full = kernel.matrix(X, X) * np.outer(y, y)
            self.diag = np.diag(self.full).copy()
        else:
            self.full = None
            self.cache = OrderedDict()
            self.cache_rows = cache_rows
            if kernel.kind == "rbf":
                self.diag = np.ones(n)
            else:
                self.diag = np.array([kernel_eval(kernel, x, x) for x in X])

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        r = self.cache.get(i)
        if r is None:
            r = self.kernel.matrix(self.X[i: i + 1], self.X)[0] * (self.y[i] * self.y)
            self.cache[i] = r
            if len(self.cache) > self.cache_rows:
                self.cache.popitem(last=False)
        else:
            self.cache.move_to_end(i)
        return r


def encode_labels(y) -> np.ndarray:
    """Map labels to +-1 (DF = +1, REAL = -1)."""
    y = np.asarray(y)
    if y.dtype.kind in "USO":
        bad = set(y.tolist()) - {REAL, DF}
        if bad:
            raise SvmError(f"unknown labels {sorted(bad)}")
        return np.where(y == DF, 1.0, -1.0)
    y = y.astype(np.float64)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise SvmError("numeric labels must be -1 or +1")
    return y


@dataclass
class SmoResult:
    alpha: np.ndarray
    bias: float
    iterations: int
    gap: float
    objective: float


def smo_solve(X, y, C: float, kernel: KernelSpec, tol: float = KKT_TOL,
              max_iter: int | None = None) -> SmoResult:
    """Solve the soft-margin dual with maximal-violating-pair SMO.

    Minimizes ``0.5 a'Qa - sum(a)`` subject to ``0 <= a <= C`` and ``y'a = 0``,
    stopping once the largest KKT violation ``m(a) - M(a)`` drops below ``tol``.
    """
    n = X.shape[0]
    Q = _QMatrix(X, y, kernel)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    if max_iter is None:
        max_iter = max(100_000, 200 * n)

    it = 0
    while True:
        pos, neg = y > 0, y < 0
        up = (pos & (alpha < C)) | (neg & (alpha > 0))
        low = (pos & (alpha > 0)) | (neg & (alpha < C))
        score = -y * grad
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        gap = score[i] - score[j]
        if gap < tol:
            break
        if it >= max_iter:
            raise ConvergenceError(f"SMO did not converge in {max_iter} iterations (gap {gap:.3g})")
        it += 1

        Qi, Qj = Q.row(i), Q.row(j)
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(Q.diag[i] + Q.diag[j] + 2.0 * Qi[j], _TAU)
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, C - diff
            elif alpha[j] > C:
                alpha[j], alpha[i] = C, C + diff
        else:
            quad = max(Q.diag[i] + Q.diag[j] - 2.0 * Qi[j], _TAU)
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, total - C
                if alpha[j] > C:
                    alpha[j], alpha[i] = C, total - C
            else:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, total
                if alpha[i] < 0:
                    alpha[i], alpha[j] = 0.0, total
        grad += Qi * (alpha[i] - ai) + Qj * (alpha[j] - aj)

    bias = _bias(alpha, grad, y, C)
    if Q.full is not None:
        objective = 0.5 * alpha @ Q.full @ alpha - alpha.sum()
    else:
        objective = 0.5 * alpha @ (grad + 1.0) - alpha.sum()
    return SmoResult(alpha, bias, it, float(gap), float(objective))


def _bias(alpha, grad, y, C) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = yg[free].mean()
    else:
        # no free vectors: midpoint of the interval allowed by the bounded ones
        pos, neg = y > 0, y < 0
        at_upper, at_lower = alpha >= C, alpha <= 0
        ub_mask = (at_upper & neg) | (at_lower & pos)
        lb_mask = (at_upper & pos) | (at_lower & neg)
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = 0.5 * (ub + lb)
    return float(-rho)


@dataclass(frozen=True)
class SvmModel:
    kernel: KernelSpec
    support_vectors: np.ndarray
    dual_coefs: np.ndarray  # alpha_i * y_i
    bias: float
    C: float
    standardizer: Standardizer | None = None
    feature_slice: str = "combined"
    label_map: dict = field(default_factory=lambda: dict(LABEL_MAP))

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, X) -> np.ndarray:
        """Scores for already-standardized rows; higher means more likely DF."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise SvmError(f"feature dimension {X.shape[1]} != model dimension {self.dim}")
        return self.kernel.matrix(X, self.support_vectors) @ self.dual_coefs + self.bias

    def score(self, X_raw) -> np.ndarray:
        """Standardize raw rows with the model's standardizer, then score them."""
        if self.standardizer is None:
            raise SvmError("model carries no standardizer")
        return self.decision_function(self.standardizer.transform(X_raw))

    def predict(self, X) -> np.ndarray:
        return labels_from_scores(self.decision_function(X))


def labels_from_scores(scores) -> np.ndarray:
    """DF iff score > 0; an exact tie goes to REAL."""
    return np.where(np.asarray(scores) > 0, DF, REAL)


def svm_train(X, y, C: float, kernel: KernelSpec, tol: float = KKT_TOL,
              standardizer: Standardizer | None = None, feature_slice: str = "combined") -> SvmModel:
    X = np.asarray(X, dtype=np.float64)
    y = encode_labels(y)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise SvmError(f"X shape {X.shape} does not match {y.size} labels")
    if not np.all(np.isfinite(X)):
        raise SvmError("features contain NaN or Inf")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise SvmError("training data must contain both REAL and DF rows")
    if not C > 0:
        raise SvmError(f"C must be positive, got {C}")

    res = smo_solve(X, y, C, kernel, tol)
    sv = res.alpha > 0
    log.debug("SMO C=%g %s gamma=%.4g: %d iterations, %d SVs",
              C, kernel.kind, kernel.gamma, res.iterations, int(sv.sum()))
    return SvmModel(kernel, X[sv].copy(), (res.alpha * y)[sv], res.bias, float(C),
                    standardizer, feature_slice)


def svm_decision(m: SvmModel, f: FeatureVector) -> float:
    if not isinstance(f, FeatureVector) or not f.standardized:
        raise SvmError("svm_decision needs a FeatureVector standardized with the model's standardizer")
    return float(m.decision_function(f.values[None, :])[0])


def svm_predict(m: SvmModel, f: FeatureVector) -> str:
    return DF if svm_decision(m, f) > 0 else REAL


# -- grid search --------------------------------------------------------------

@dataclass(frozen=True)
class GridPoint:
    C: float
    gamma_mode: str
    kernel: str

    def __post_init__(self):
        if self.gamma_mode not in GAMMA_MODES:
            raise SvmError(f"unknown gamma mode {self.gamma_mode!r}; choose from {GAMMA_MODES}")
        if self.kernel not in KERNELS:
            raise SvmError(f"unknown kernel {self.kernel!r}; choose from {KERNELS}")
        if not self.C > 0:
            raise SvmError(f"C must be positive, got {self.C}")


def default_grid() -> list[GridPoint]:
    """5 C values x 2 gamma modes x 3 kernels, in tie-break order."""
    return [GridPoint(c, g, k) for c, g, k in itertools.product(DEFAULT_C, GAMMA_MODES, KERNELS)]


_KERNEL_ALIASES = {"rbf": "rbf", "poly": "polynomial", "polynomial": "polynomial", "sigmoid": "sigmoid"}


def parse_grid(text: str) -> list[GridPoint]:
    """Parse ``default`` or ``C=1|10,kernel=rbf,gamma=scaled``; omitted keys take all defaults."""
    text = text.strip()
    if text in ("", "default"):
        return default_grid()
    values = {"C": list(DEFAULT_C), "gamma": list(GAMMA_MODES), "kernel": list(KERNELS)}
    for part in text.split(","):
        key, sep, val = part.partition("=")
        key = key.strip()
        if not sep or key not in values:
            raise SvmError(f"bad grid item {part!r}; expected C=..., gamma=... or kernel=...")
        items = [v.strip() for v in val.split("|") if v.strip()]
        if key == "C":
            values["C"] = [float(v) for v in items]
        elif key == "kernel":
            try:
                values["kernel"] = [_KERNEL_ALIASES[v] for v in items]
            except KeyError as exc:
                raise SvmError(f"unknown kernel {exc.args[0]!r}") from None
        else:
            values["gamma"] = items
    return [GridPoint(c, g, k) for c, g, k in
            itertools.product(sorted(values["C"]), values["gamma"], values["kernel"])]


@dataclass
class GridSearchResult:
    entries: list  # dicts: C, gamma_mode, gamma, kernel, dev_balanced_accuracy
    best_index: int
    model: SvmModel
    sigma2: float

    @property
    def best(self) -> dict:
        return self.entries[self.best_index]


def gamma_for(mode: str, dim: int, sigma2: float) -> float:
    if mode == "uniform":
        return 1.0 / dim
    return 1.0 / (dim * sigma2)


def grid_search(X_train, y_train, X_dev, y_dev, grid=None, tol: float = KKT_TOL,
                workers: int = 1, feature_slice: str = "combined") -> GridSearchResult:
    """Fit the standardizer on train, train one SVM per grid point, pick by dev balanced accuracy.

    Ties keep the earliest grid point. Inputs are raw (unstandardized) features.
    """
    grid = default_grid() if grid is None else list(grid)
    if not grid:
        raise SvmError("empty hyper-parameter grid")
    X_train = np.asarray(X_train, dtype=np.float64)
    X_dev = np.asarray(X_dev, dtype=np.float64)
    if X_dev.ndim != 2 or X_dev.shape[0] == 0:
        raise SvmError("empty development set")
    y_dev_lab = np.where(encode_labels(y_dev) > 0, DF, REAL)
    if len(set(y_dev_lab.tolist())) < 2:
        raise SvmError("development set must contain both classes")

    scaler = fit_standardizer(X_train)
    Xt, Xd = scaler.transform(X_train), scaler.transform(X_dev)
    dim = Xt.shape[1]
    sigma2 = feature_variance(Xt)

    def run(p: GridPoint):
        k = KernelSpec(p.kernel, gamma_for(p.gamma_mode, dim, sigma2))
        m = svm_train(Xt, y_train, p.C, k, tol, scaler, feature_slice)
        ba = balanced_accuracy(m.predict(Xd), y_dev_lab)
        return m, ba

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, grid))
    else:
        results = [run(p) for p in grid]

    entries = []
    for p, (m, ba) in zip(grid, results):
        entries.append({"C": p.C, "gamma_mode": p.gamma_mode, "gamma": m.kernel.gamma,
                        "kernel": p.kernel, "dev_balanced_accuracy": ba})
    best = max(range(len(entries)), key=lambda i: (entries[i]["dev_balanced_accuracy"], -i))
    return GridSearchResult(entries, best, results[best][0], sigma2)


# -- persistence ----------------------------------------------------------------

MODEL_KIND = "prosospeaker-svm"


def save_model(path, m: SvmModel, grid: GridSearchResult | None = None):
    tensors = {"support_vectors": m.support_vectors, "dual_coefs": m.dual_coefs}
    if m.standardizer is not None:
        tensors["standardizer.mean"] = m.standardizer.mean
        tensors["standardizer.std"] = m.standardizer.std
    meta = {
        "kind": MODEL_KIND,
        "format_version": archive.FORMAT_VERSION,
        "kernel": m.kernel.to_dict(),
        "C": m.C,
        "bias": m.bias,
        "feature_slice": m.feature_slice,
        "label_map": {str(k): v for k, v in m.label_map.items()},
    }
    if grid is not None:
        meta["grid"] = {"entries": grid.entries, "best_index": grid.best_index,
                        "sigma2": grid.sigma2}
    archive.save(path, tensors, meta, dtype="<f8")


def load_model(path) -> tuple[SvmModel, dict | None]:
    """Returns the model and the grid-search record it was saved with (if any)."""
    tensors, meta = archive.load(path)
    if meta.get("kind") != MODEL_KIND:
        raise SvmError(f"{path} is not a model file")
    scaler = None
    if "standardizer.mean" in tensors:
        scaler = Standardizer(tensors["standardizer.mean"], tensors["standardizer.std"])
    m = SvmModel(
        KernelSpec(**meta["kernel"]), tensors["support_vectors"], tensors["dual_coefs"],
        float(meta["bias"]), float(meta["C"]), scaler, meta.get("feature_slice", "combined"),
        {int(k): v for k, v in meta["label_map"].items()},
    )
    return m, meta.get("grid")
