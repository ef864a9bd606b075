"""L2-regularized logistic regression fitted by damped Newton iterations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gbdt import sigmoid


class ConvergenceError(RuntimeError):
    pass


@dataclass
class LogRegModel:
    coef: np.ndarray
    intercept: float
    l2: float
    n_iter: int

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != len(self.coef):
            raise ValueError(f"expected {len(self.coef)} features, got {X.shape[1]}")
        return X @ self.coef + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))


def logreg_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Mean log loss plus ``l2/2 * |w|^2``; the intercept is not penalized."""
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, np.where(y == 1, -z, z))) + 0.5 * l2 * (w @ w))


def logreg_fit(X, y, l2: float = 1e-2, tol: float = 1e-6, max_iter: int = 100) -> LogRegModel:
    """Minimize :func:`logreg_objective` until the gradient norm is at most ``tol``.

    Raises :class:`ConvergenceError` if ``max_iter`` Newton steps do not get there.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    if len(np.unique(y)) < 2:
        raise ValueError("logistic regression needs both classes")
    n, d = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    reg = np.full(d + 1, l2)
    reg[-1] = 0.0
    theta = np.zeros(d + 1)

    def objective(t):
        return logreg_objective(t[:-1], t[-1], X, y, l2)

    f = objective(theta)
    for it in range(1, max_iter + 1):
        p = sigmoid(A @ theta)
        grad = A.T @ (p - y) / n + reg * theta
        if np.linalg.norm(grad) <= tol:
            return LogRegModel(theta[:-1].copy(), float(theta[-1]), l2, it - 1)
        H = (A * (p * (1 - p))[:, None]).T @ A / n + np.diag(reg)
        H[np.diag_indices_from(H)] += 1e-12
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        # backtracking keeps the objective non-increasing
        t = 1.0
        while t > 1e-10:
            cand = theta - t * step
            fc = objective(cand)
            if fc <= f + 1e-4 * t * (grad @ -step) or fc <= f:
                break
            t *= 0.5
        theta, f = cand, fc
    p = sigmoid(A @ theta)
    grad = A.T @ (p - y) / n + reg * theta
    if np.linalg.norm(grad) <= tol:
        return LogRegModel(theta[:-1].copy(), float(theta[-1]), l2, max_iter)
    raise ConvergenceError(
        f"logistic regression did not converge in {max_iter} iterations "
        f"(gradient norm {np.linalg.norm(grad):.3g})"
    )


def logreg_predict_proba(model: LogRegModel, X) -> np.ndarray:
    return model.predict_proba(X)
