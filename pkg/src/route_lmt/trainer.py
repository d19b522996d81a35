"""Fit and evaluate the linear routing head.

The translator backbone is adapted upstream; what arrives here are frozen
exported feature vectors, so the head is an exact ridge regression.
It is solved in closed form via the normal equations: features are
standardized per dimension, the bias is unpenalized, and the symmetric
positive-definite system is factored with Cholesky. Closed form keeps
fitting deterministic and directly testable against a brute-force oracle.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from ._hashing import keyed_unit_interval
from .errors import (
    ConfigError,
    DegenerateSplitError,
    IncompleteLabelsError,
    RegularizationRequiredError,
)
from .evaluation import spearman
from .heads import SCALE_FLOOR, LinearHead, Target
from .ingest import Dataset
from .policy import budget_size
from .scorers import score_learned

_SPLIT_DOMAIN = b"route.split"

DEFAULT_RIDGE_LAMBDA = 1e-3


@dataclass(frozen=True)
class TrainReport:
    train_mse: float | None  # None when only held-out evaluation ran
    heldout_mse: float
    heldout_spearman: float | None  # None when undefined (constant or unlabeled)
    n_train: int
    n_heldout: int


def split_dataset(
    dataset: Dataset, heldout_ratio: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Deterministic train/heldout partition by keyed hash of record id.

    The heldout side gets round(heldout_ratio * n) records, so sizes are
    within one of the exact ratio. Hash-keyed assignment makes the split
    independent of record order in the file.
    """
    if not 0.0 < heldout_ratio < 1.0:
        raise ConfigError(f"heldout_ratio={heldout_ratio!r} outside (0, 1)")
    n = len(dataset)
    if n == 0:
        raise ConfigError("cannot split an empty dataset")
    k = budget_size(heldout_ratio, n)
    if k == 0 or k == n:
        raise DegenerateSplitError(
            f"split of {n} records at ratio {heldout_ratio} leaves one side empty"
        )
    order = sorted(
        dataset.records,
        key=lambda r: (keyed_unit_interval(seed, r.id, _SPLIT_DOMAIN), r.id),
    )
    heldout_ids = {record.id for record in order[:k]}
    train = tuple(r for r in dataset if r.id not in heldout_ids)
    heldout = tuple(r for r in dataset if r.id in heldout_ids)
    return Dataset(records=train), Dataset(records=heldout)


def _labels(dataset: Dataset, target: Target) -> np.ndarray:
    values = []
    for record in dataset:
        if target is Target.GAIN:
            values.append(record.true_gain())
        else:
            if record.q_small is None:
                raise IncompleteLabelsError(f"record {record.id!r} lacks q_small")
            values.append(record.q_small)
    return np.asarray(values, dtype=float)


def _fingerprint(ids: list[str]) -> str:
    return hashlib.sha256("\n".join(sorted(ids)).encode("utf-8")).hexdigest()


def fit_linear_head(
    train: Dataset, target: Target, ridge_lambda: float = DEFAULT_RIDGE_LAMBDA
) -> LinearHead:
    """Closed-form ridge fit of the head on standardized features.

    Solves argmin_{w,b} sum((w . phi_std + b - y)^2) + lambda * ||w||^2
    exactly: the (dim+1)-sized normal-equations system, with the bias row
    unpenalized, is assembled and factored via Cholesky. A singular
    system with lambda == 0 raises RegularizationRequiredError.
    """
    if ridge_lambda < 0:
        raise ConfigError("lambda must be >= 0")
    if len(train) == 0:
        raise ConfigError("cannot fit on an empty dataset")
    X = train.features_matrix()
    y = _labels(train, target)
    n, dim = X.shape
    if n <= dim:
        warnings.warn(
            f"fitting {dim} weights on only {n} records; consider more data "
            f"or a larger lambda",
            RuntimeWarning,
            stacklevel=2,
        )
    mean = X.mean(axis=0)
    scale = np.maximum(X.std(axis=0), SCALE_FLOOR)
    standardized = (X - mean) / scale

    design = np.concatenate([standardized, np.ones((n, 1))], axis=1)
    penalty = np.diag(np.append(np.full(dim, ridge_lambda), 0.0))
    gram = design.T @ design + penalty
    rhs = design.T @ y
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        if ridge_lambda == 0:
            raise RegularizationRequiredError(
                "normal equations are singular; refit with lambda > 0"
            ) from exc
        raise RegularizationRequiredError(
            f"normal equations not positive definite even with lambda={ridge_lambda}; "
            f"increase lambda"
        ) from exc
    coef = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))

    return LinearHead(
        weights=tuple(float(w) for w in coef[:dim]),
        bias=float(coef[dim]),
        target=target,
        feature_mean=tuple(float(m) for m in mean),
        feature_scale=tuple(float(s) for s in scale),
        ridge_lambda=ridge_lambda,
        train_fingerprint=_fingerprint(train.ids()),
    )


def evaluate_head(head: LinearHead, heldout: Dataset) -> TrainReport:
    """Held-out MSE against the head's target, plus ranking quality.

    heldout_spearman correlates the head's routing scores (negated for
    quality heads) with true gains; it is None when the held-out set has
    no gain labels or when either side is constant. train_mse is not
    recomputed here and is reported as the held-out value's counterpart
    only by fit-time callers.
    """
    if len(heldout) == 0:
        raise ConfigError("cannot evaluate on an empty dataset")
    X = heldout.features_matrix()
    labels = _labels(heldout, head.target)
    predictions = head.predict_many(X)
    mse = float(np.mean((predictions - labels) ** 2))

    rho: float | None = None
    if all(record.labeled for record in heldout):
        routing_scores = [score_learned(record, head) for record in heldout]
        gains = [record.true_gain() for record in heldout]
        if len(gains) >= 2:
            rho = spearman(routing_scores, gains)
    return TrainReport(
        train_mse=None,
        heldout_mse=mse,
        heldout_spearman=rho,
        n_train=0,
        n_heldout=len(heldout),
    )


def train_and_evaluate(
    dataset: Dataset,
    target: Target,
    ridge_lambda: float = DEFAULT_RIDGE_LAMBDA,
    heldout_ratio: float = 0.2,
    seed: int = 0,
) -> tuple[LinearHead, TrainReport]:
    """Split, fit, and evaluate in one deterministic step."""
    train, heldout = split_dataset(dataset, heldout_ratio, seed)
    head = fit_linear_head(train, target, ridge_lambda)
    X = train.features_matrix()
    y = _labels(train, target)
    train_mse = float(np.mean((head.predict_many(X) - y) ** 2))
    heldout_report = evaluate_head(head, heldout)
    report = TrainReport(
        train_mse=train_mse,
        heldout_mse=heldout_report.heldout_mse,
        heldout_spearman=heldout_report.heldout_spearman,
        n_train=len(train),
        n_heldout=len(heldout),
    )
    return head, report
