"""Small in-context baselines and ROC-AUC scoring for generated tasks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit
from scipy.stats import rankdata

from .errors import ContractError, DegenerateTaskError

BASELINES = ("logistic", "knn")


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counted as one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ContractError("scores and labels differ in shape")
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateTaskError("AUC is undefined for single-class labels")
    ranks = rankdata(s)  # average ranks resolve ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def logistic_loss_grad(w, X, y, l2: float):
    """Mean log-loss plus (l2/2)|w[:-1]|^2 and its gradient; the last weight is the bias."""
    z = X @ w[:-1] + w[-1]
    loss = -np.mean(y * log_expit(z) + (1 - y) * log_expit(-z)) + 0.5 * l2 * np.dot(w[:-1], w[:-1])
    r = (expit(z) - y) / len(y)
    grad = np.empty_like(w)
    grad[:-1] = X.T @ r + l2 * w[:-1]
    grad[-1] = r.sum()
    return float(loss), grad


@dataclass
class LogisticModel:
    weights: np.ndarray  # coef..., bias
    losses: list = field(default_factory=list)

    def decision(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights[:-1] + self.weights[-1]

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision(X))


def fit_logistic(X_ctx, y_ctx, l2: float = 1e-2, iters: int = 200, tol: float = 1e-9) -> LogisticModel:
    """Diagonally preconditioned gradient descent with Armijo backtracking; the loss never increases.

    The preconditioner is a per-coordinate curvature bound, so a heavy penalty
    on the weights does not stall the unpenalized bias.
    Inputs are expected to be standardized already (see ``prepare_features``).
    """
    X = np.asarray(X_ctx, dtype=np.float64)
    y = np.asarray(y_ctx, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise DegenerateTaskError("logistic fit needs both classes in the context")
    w = np.zeros(X.shape[1] + 1)
    inv_h = 1.0 / np.maximum(np.append(0.25 * (X ** 2).mean(axis=0) + l2, 0.25), 1e-12)
    loss, g = logistic_loss_grad(w, X, y, l2)
    losses = [loss]
    step = 1.0
    for _ in range(iters):
        d = inv_h * g
        gg = float(g @ d)
        if gg < tol:
            break
        while True:
            w_new = w - step * d
            new_loss, new_g = logistic_loss_grad(w_new, X, y, l2)
            if new_loss <= loss - 0.5 * step * gg or step < 1e-12:
                break
            step *= 0.5
        if new_loss > loss:
            break
        w, loss, g = w_new, new_loss, new_g
        losses.append(loss)
        step = min(step * 2.0, 64.0)
    return LogisticModel(w, losses)


def prepare_features(X_ctx, X_query, mask_ctx=None, mask_query=None):
    """Impute masked cells with the context mean, add indicators, standardize on context stats only."""
    Xc = np.asarray(X_ctx, dtype=np.float64).copy()
    Xq = np.asarray(X_query, dtype=np.float64).copy()
    if mask_ctx is not None:
        mc, mq = np.asarray(mask_ctx, bool), np.asarray(mask_query, bool)
        present = (~mc).sum(axis=0)
        mean = np.where(present > 0, np.where(mc, 0.0, Xc).sum(axis=0) / np.maximum(present, 1), 0.0)
        Xc = np.where(mc, mean, Xc)
        Xq = np.where(mq, mean, Xq)
        partial = mc.any(axis=0) & ~mc.all(axis=0)  # indicators only where they can vary
        Xc = np.hstack([Xc, mc[:, partial].astype(np.float64)])
        Xq = np.hstack([Xq, mq[:, partial].astype(np.float64)])
    mu = Xc.mean(axis=0)
    sd = Xc.std(axis=0)
    keep = sd > 1e-12
    return (Xc[:, keep] - mu[keep]) / sd[keep], (Xq[:, keep] - mu[keep]) / sd[keep]


def knn_scores(Xc, yc, Xq, k: int = 15) -> np.ndarray:
    """Fraction of positive labels among the k nearest context rows (Euclidean)."""
    k = min(k, len(yc))
    d = (Xq ** 2).sum(1)[:, None] - 2.0 * Xq @ Xc.T + (Xc ** 2).sum(1)[None, :]
    nn = np.argpartition(d, k - 1, axis=1)[:, :k]
    return np.asarray(yc, dtype=np.float64)[nn].mean(axis=1)


@dataclass
class EvalResult:
    meta: dict
    auc: float
    baseline: str
    n_ctx: int

    def __post_init__(self):
        if not 0.0 <= self.auc <= 1.0:
            raise ContractError(f"AUC {self.auc} outside [0, 1]")

    def to_dict(self) -> dict:
        return {"auc": self.auc, "baseline": self.baseline, "n_ctx": self.n_ctx, "meta": self.meta}


def score_task(task, baseline: str = "logistic", l2: float = 1e-2, iters: int = 200, k: int = 15) -> np.ndarray:
    Xc, Xq = prepare_features(task.X_ctx, task.X_query, task.mask_ctx, task.mask_query)
    if baseline == "logistic":
        return fit_logistic(Xc, task.y_ctx, l2=l2, iters=iters).decision(Xq)
    if baseline == "knn":
        return knn_scores(Xc, task.y_ctx, Xq, k)
    raise ContractError(f"unknown baseline {baseline!r}; choose from {BASELINES}")


def evaluate_task(task, baseline: str = "logistic", **kw) -> EvalResult:
    auc = roc_auc(score_task(task, baseline, **kw), task.y_query)
    meta = {k: v for k, v in task.meta.items() if not k.endswith("row_ids")}
    return EvalResult(meta, auc, baseline, task.n_ctx)


def summarize(results) -> dict:
    """Mean/median AUC overall and per context size."""
    results = list(results)
    if not results:
        return {"n_tasks": 0, "by_n_ctx": {}}
    aucs = np.array([r.auc for r in results])
    by = {}
    for n in sorted({r.n_ctx for r in results}):
        a = np.array([r.auc for r in results if r.n_ctx == n])
        by[str(n)] = {"n_tasks": len(a), "mean_auc": float(a.mean()), "median_auc": float(np.median(a))}
    return {"n_tasks": len(aucs), "mean_auc": float(aucs.mean()), "median_auc": float(np.median(aucs)), "by_n_ctx": by}


def evaluate_stream(tasks, baseline: str = "logistic", report_path=None, **kw) -> dict:
    """Evaluate every task; unusable ones (single-class context or query) are counted, not fatal."""
    results, skipped = [], 0
    fh = open(report_path, "w") if report_path is not None else None
    try:
        for task in tasks:
            try:
                r = evaluate_task(task, baseline, **kw)
            except DegenerateTaskError:
                skipped += 1
                continue
            results.append(r)
            if fh is not None:
                fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    finally:
        if fh is not None:
            fh.close()
    stats = summarize(results)
    stats["skipped"] = skipped
    stats["baseline"] = baseline
    return stats
