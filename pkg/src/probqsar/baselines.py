"""Reference regressors: ridge, k-nearest neighbours, a CART-style tree and an MLP."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import AdamState, Prng, Sequential, adam_step, minibatches, mse_loss


class SingularSystem(np.linalg.LinAlgError):
    pass


class InsufficientData(ValueError):
    pass


# -- ridge ----------------------------------------------------------------------


def _cholesky_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a symmetric positive-definite system by Cholesky factorisation."""
    n = len(a)
    scale = max(float(np.max(np.abs(np.diag(a)))), 1.0)
    l = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - l[j, :j] @ l[j, :j]
        if d <= 1e-12 * scale:
            raise SingularSystem("matrix is not numerically positive definite")
        l[j, j] = np.sqrt(d)
        l[j + 1 :, j] = (a[j + 1 :, j] - l[j + 1 :, :j] @ l[j, :j]) / l[j, j]
    y = np.zeros_like(b)
    for i in range(n):
        y[i] = (b[i] - l[i, :i] @ y[:i]) / l[i, i]
    x = np.zeros_like(b)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - l[i + 1 :, i] @ x[i + 1 :]) / l[i, i]
    return x


@dataclass
class RidgeModel:
    weights: np.ndarray
    intercept: float
    lam: float
    name: str = "ridge"

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_2d(x) @ self.weights + self.intercept


def ridge_fit(x: np.ndarray, y: np.ndarray, lam: float = 1.0) -> RidgeModel:
    """Solve (XcᵀXc + λI) w = Xcᵀyc on centred data; intercept from the means.

    With more features than samples the equivalent dual system
    (XcXcᵀ + λI) a = yc, w = Xcᵀa is solved instead.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2:
        raise InsufficientData("ridge needs at least 2 samples")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    x_mean, y_mean = x.mean(axis=0), y.mean()
    xc, yc = x - x_mean, y - y_mean
    n, d = xc.shape
    if d <= n or lam == 0:
        w = _cholesky_solve(xc.T @ xc + lam * np.eye(d), xc.T @ yc)
    else:
        w = xc.T @ _cholesky_solve(xc @ xc.T + lam * np.eye(n), yc)
    return RidgeModel(w, float(y_mean - x_mean @ w), lam)


def ridge_predict(model: RidgeModel, x: np.ndarray) -> float:
    return float(np.asarray(x) @ model.weights + model.intercept)


# -- k nearest neighbours ---------------------------------------------------------


@dataclass
class KnnModel:
    x: np.ndarray
    y: np.ndarray
    k: int = 5
    name: str = "knn"

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if not 1 <= self.k <= len(self.x):
            raise ValueError("k must be in [1, n_train]")

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Mean target of the k nearest training rows; distance ties go to the lower index."""
        q = np.atleast_2d(np.asarray(x, dtype=np.float64))
        index = np.arange(len(self.x))
        out = np.empty(len(q))
        for i, row in enumerate(q):
            diff = self.x - row
            dist = np.einsum("ij,ij->i", diff, diff)
            order = np.lexsort((index, dist))
            out[i] = self.y[order[: self.k]].mean()
        return out


def knn_fit(x: np.ndarray, y: np.ndarray, k: int = 5) -> KnnModel:
    return KnnModel(x, y, k)


def knn_predict(model: KnnModel, x: np.ndarray) -> float:
    return float(model.predict(np.asarray(x).reshape(1, -1))[0])


# -- regression tree ---------------------------------------------------------------


@dataclass
class TreeNode:
    value: float
    n: int
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def best_split(x: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[int, float, float] | None:
    """Best (feature, threshold, SSE reduction) over midpoints of sorted unique values.

    Ties go to the lowest feature index, then the lowest threshold. Returns
    ``None`` if no split leaves ``min_leaf`` samples on each side and strictly
    reduces the squared error.
    """
    n, d = x.shape
    total_sse = float(np.sum((y - y.mean()) ** 2))
    best: tuple[int, float, float] | None = None
    for f in range(d):
        order = np.argsort(x[:, f], kind="stable")
        xs, ys = x[order, f], y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        # candidate cut after position i (left = [0..i])
        i = np.arange(min_leaf - 1, n - min_leaf)
        if len(i) == 0:
            continue
        valid = xs[i] < xs[i + 1]
        i = i[valid]
        if len(i) == 0:
            continue
        nl = i + 1.0
        nr = n - nl
        sl, sr = csum[i], csum[-1] - csum[i]
        ql, qr = csq[i], csq[-1] - csq[i]
        sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
        gain = total_sse - sse
        j = int(np.argmax(gain))  # first maximum = lowest threshold
        g = float(gain[j])
        if g <= 1e-12 * max(total_sse, 1.0):
            continue
        if best is None or g > best[2] * (1 + 1e-12) + 1e-15:
            best = (f, float((xs[i[j]] + xs[i[j] + 1]) / 2.0), g)
    return best


@dataclass
class TreeModel:
    root: TreeNode
    max_depth: int
    min_leaf: int
    name: str = "tree"

    def predict_one(self, x: np.ndarray) -> float:
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.value

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(row) for row in np.atleast_2d(x)])

    def depth(self) -> int:
        def rec(node: TreeNode) -> int:
            return 0 if node.is_leaf else 1 + max(rec(node.left), rec(node.right))

        return rec(self.root)

    def leaves(self) -> list[TreeNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend((node.right, node.left))
        return out


def tree_fit(x: np.ndarray, y: np.ndarray, max_depth: int = 12, min_leaf: int = 3) -> TreeModel:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2 * min_leaf:
        raise InsufficientData("tree needs at least 2 * min_leaf samples")

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        node = TreeNode(float(y[idx].mean()), len(idx))
        if depth >= max_depth or len(idx) < 2 * min_leaf:
            return node
        split = best_split(x[idx], y[idx], min_leaf)
        if split is None:
            return node
        f, thr, _ = split
        mask = x[idx, f] <= thr
        node.feature, node.threshold = f, thr
        node.left = grow(idx[mask], depth + 1)
        node.right = grow(idx[~mask], depth + 1)
        return node

    return TreeModel(grow(np.arange(len(x)), 0), max_depth, min_leaf)


def tree_predict(model: TreeModel, x: np.ndarray) -> float:
    return model.predict_one(np.asarray(x, dtype=np.float64))


# -- MLP ---------------------------------------------------------------------------


@dataclass
class MlpConfig:
    hidden: tuple[int, ...] = (128, 64)
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0


@dataclass
class MlpRegressor:
    config: MlpConfig = field(default_factory=MlpConfig)
    net: Sequential | None = None
    y_mean: float = 0.0
    y_std: float = 1.0
    name: str = "mlp"

    def fit(self, x: np.ndarray, y: np.ndarray) -> "MlpRegressor":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        cfg = self.config
        rng = Prng(cfg.seed)
        self.y_mean, self.y_std = float(y.mean()), float(y.std()) or 1.0
        ys = ((y - self.y_mean) / self.y_std)[:, None]
        self.net = Sequential.build([x.shape[1], *cfg.hidden, 1], "leaky_relu", "identity", rng.derive(1))
        params = self.net.params()
        opt = AdamState.for_params(params, lr=cfg.lr)
        batch_rng = rng.derive(2)
        for _ in range(cfg.epochs):
            for idx in minibatches(len(x), cfg.batch_size, batch_rng):
                _, grad = mse_loss(self.net.forward(x[idx]), ys[idx])
                grads, _ = self.net.backward(grad)
                adam_step(params, grads, opt)
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = self.net.forward(np.atleast_2d(x), cache=False)[:, 0]
        return out * self.y_std + self.y_mean
