from __future__ import annotations

import numpy as np
import pytest

from route_lmt.errors import (
    ConfigError,
    DegenerateSplitError,
    IncompleteLabelsError,
    MissingSignalError,
    RegularizationRequiredError,
)
from route_lmt.heads import LinearHead, Target
from route_lmt.ingest import Dataset, PlantedLinear, SyntheticConfig, generate_synthetic
from route_lmt.trainer import (
    evaluate_head,
    fit_linear_head,
    split_dataset,
    train_and_evaluate,
)

from conftest import rec


def _feature_dataset(
    X: np.ndarray, y: np.ndarray, target: Target = Target.GAIN
) -> Dataset:
    """Wrap a regression problem as records; y becomes the target label."""
    records = []
    for i, (row, label) in enumerate(zip(X, y)):
        # Labels live on the quality scale; center them into range.
        q_small = 50.0
        if target is Target.GAIN:
            q_large = q_small + float(np.clip(label, -50.0, 50.0))
        else:
            q_small = float(np.clip(label, 0.0, 100.0))
            q_large = None
        records.append(
            rec(f"r{i:04d}", q_small=q_small, q_large=q_large, features=tuple(row))
        )
    return Dataset(records=tuple(records))


# ---------------------------------------------------------------------------
# split_dataset
# ---------------------------------------------------------------------------


def test_split_sizes() -> None:
    dataset = Dataset(records=tuple(rec(f"r{i}") for i in range(10)))
    train, heldout = split_dataset(dataset, 0.2, seed=1)
    assert (len(train), len(heldout)) == (8, 2)


def test_split_deterministic_and_order_independent() -> None:
    records = tuple(rec(f"r{i}") for i in range(30))
    a = split_dataset(Dataset(records=records), 0.3, seed=5)
    b = split_dataset(Dataset(records=records), 0.3, seed=5)
    assert a[0].ids() == b[0].ids() and a[1].ids() == b[1].ids()
    shuffled = Dataset(records=records[::-1])
    c = split_dataset(shuffled, 0.3, seed=5)
    assert set(c[1].ids()) == set(a[1].ids())


def test_split_disjoint_and_exhaustive() -> None:
    dataset = Dataset(records=tuple(rec(f"r{i}") for i in range(23)))
    train, heldout = split_dataset(dataset, 0.25, seed=2)
    assert set(train.ids()) | set(heldout.ids()) == set(dataset.ids())
    assert set(train.ids()) & set(heldout.ids()) == set()


def test_split_degenerate_errors() -> None:
    single = Dataset(records=(rec("only"),))
    with pytest.raises(DegenerateSplitError):
        split_dataset(single, 0.5, seed=0)
    ten = Dataset(records=tuple(rec(f"r{i}") for i in range(10)))
    with pytest.raises(DegenerateSplitError):
        split_dataset(ten, 0.01, seed=0)
    with pytest.raises(ConfigError):
        split_dataset(ten, 1.5, seed=0)


def test_split_seed_changes_partition() -> None:
    dataset = Dataset(records=tuple(rec(f"r{i}") for i in range(40)))
    a = split_dataset(dataset, 0.5, seed=1)[1]
    b = split_dataset(dataset, 0.5, seed=2)[1]
    assert set(a.ids()) != set(b.ids())


# ---------------------------------------------------------------------------
# fit_linear_head
# ---------------------------------------------------------------------------


def test_fit_recovers_planted_weights() -> None:
    rng = np.random.default_rng(0)
    X = rng.standard_normal((1000, 2))
    y = 2.0 * X[:, 0] - 3.0 * X[:, 1] + 1.0
    head = fit_linear_head(_feature_dataset(X, y), Target.GAIN, ridge_lambda=1e-8)
    weights, intercept = head.effective_coefficients()
    assert weights[0] == pytest.approx(2.0, abs=1e-4)
    assert weights[1] == pytest.approx(-3.0, abs=1e-4)
    assert intercept == pytest.approx(1.0, abs=1e-4)


def test_fit_constant_target() -> None:
    rng = np.random.default_rng(1)
    X = rng.standard_normal((200, 3))
    y = np.full(200, 7.25)
    head = fit_linear_head(
        _feature_dataset(X, y, Target.QUALITY), Target.QUALITY, ridge_lambda=1e-3
    )
    assert max(abs(w) for w in head.weights) < 1e-9
    assert head.bias == pytest.approx(7.25, abs=1e-9)


def test_fit_matches_brute_force_oracle() -> None:
    """Independent oracle: dense inverse of the augmented normal equations."""
    rng = np.random.default_rng(7)
    for trial in range(50):
        n = int(rng.integers(20, 80))
        dim = int(rng.integers(1, 6))
        lam = float(rng.choice([1e-4, 0.1, 0.5, 2.0]))
        X = rng.standard_normal((n, dim)) * rng.uniform(0.5, 3.0, dim)
        y = rng.standard_normal(n) * 10.0
        head = fit_linear_head(_feature_dataset(X, y), Target.GAIN, ridge_lambda=lam)

        mean = X.mean(axis=0)
        scale = np.maximum(X.std(axis=0), 1e-12)
        A = np.concatenate([(X - mean) / scale, np.ones((n, 1))], axis=1)
        penalty = np.diag(np.append(np.full(dim, lam), 0.0))
        label = np.array([r.true_gain() for r in _feature_dataset(X, y)])
        coef = np.linalg.inv(A.T @ A + penalty) @ (A.T @ label)

        assert np.allclose(np.array(head.weights), coef[:dim], atol=1e-8)
        assert head.bias == pytest.approx(float(coef[dim]), abs=1e-8)


def test_fit_satisfies_normal_equations() -> None:
    rng = np.random.default_rng(3)
    X = rng.standard_normal((120, 5))
    y = rng.standard_normal(120) * 5.0
    lam = 0.25
    head = fit_linear_head(_feature_dataset(X, y), Target.GAIN, ridge_lambda=lam)
    dataset = _feature_dataset(X, y)
    label = np.array([r.true_gain() for r in dataset])
    mean = np.array(head.feature_mean)
    scale = np.array(head.feature_scale)
    A = np.concatenate([(X - mean) / scale, np.ones((len(X), 1))], axis=1)
    coef = np.append(head.weights, head.bias)
    residual = A.T @ (A @ coef - label) + lam * np.append(head.weights, 0.0)
    assert np.linalg.norm(residual) <= 1e-8 * max(1.0, np.linalg.norm(A.T @ label))


def test_fit_weight_norm_shrinks_with_lambda() -> None:
    rng = np.random.default_rng(11)
    X = rng.standard_normal((80, 4))
    y = X @ np.array([3.0, -1.0, 2.0, 0.5]) + rng.standard_normal(80)
    dataset = _feature_dataset(X, y)
    norms = []
    for lam in (1e-6, 1e-3, 0.1, 1.0, 10.0, 100.0):
        head = fit_linear_head(dataset, Target.GAIN, ridge_lambda=lam)
        norms.append(float(np.linalg.norm(head.weights)))
    for at_smaller_lam, at_larger_lam in zip(norms, norms[1:]):
        assert at_larger_lam <= at_smaller_lam + 1e-12


def test_fit_invariant_to_feature_rescaling() -> None:
    rng = np.random.default_rng(23)
    X = rng.standard_normal((150, 3))
    y = X @ np.array([1.0, -2.0, 0.5]) + 3.0 + 0.1 * rng.standard_normal(150)
    scales = np.array([100.0, 0.01, 7.0])
    head_a = fit_linear_head(_feature_dataset(X, y), Target.GAIN, ridge_lambda=1e-3)
    head_b = fit_linear_head(_feature_dataset(X * scales, y), Target.GAIN, ridge_lambda=1e-3)
    probe = rng.standard_normal((20, 3))
    pred_a = head_a.predict_many(probe)
    pred_b = head_b.predict_many(probe * scales)
    assert np.allclose(pred_a, pred_b, atol=1e-6)


def test_fit_is_bit_deterministic() -> None:
    rng = np.random.default_rng(4)
    X = rng.standard_normal((60, 3))
    y = rng.standard_normal(60)
    dataset = _feature_dataset(X, y)
    head_a = fit_linear_head(dataset, Target.GAIN, ridge_lambda=0.01)
    head_b = fit_linear_head(dataset, Target.GAIN, ridge_lambda=0.01)
    assert head_a == head_b


def test_fit_warns_when_underdetermined() -> None:
    rng = np.random.default_rng(5)
    X = rng.standard_normal((3, 5))
    y = rng.standard_normal(3)
    with pytest.warns(RuntimeWarning):
        fit_linear_head(_feature_dataset(X, y), Target.GAIN, ridge_lambda=1.0)


def test_fit_singular_without_ridge() -> None:
    rng = np.random.default_rng(6)
    base = rng.standard_normal((50, 1))
    X = np.concatenate([base, base], axis=1)  # perfectly collinear
    y = rng.standard_normal(50)
    with pytest.raises(RegularizationRequiredError):
        fit_linear_head(_feature_dataset(X, y), Target.GAIN, ridge_lambda=0.0)


def test_fit_label_requirements() -> None:
    no_features = Dataset(records=(rec("a", q_small=10, q_large=20),))
    with pytest.raises(MissingSignalError):
        fit_linear_head(no_features, Target.GAIN)
    no_large = Dataset(
        records=(
            rec("a", q_small=10, features=(1.0,)),
            rec("b", q_small=20, features=(2.0,)),
        )
    )
    with pytest.raises(IncompleteLabelsError):
        fit_linear_head(no_large, Target.GAIN)
    # Quality target only needs q_small.
    head = fit_linear_head(no_large, Target.QUALITY, ridge_lambda=1e-3)
    assert head.target is Target.QUALITY


def test_fingerprint_tracks_training_ids() -> None:
    rng = np.random.default_rng(12)
    X = rng.standard_normal((30, 2))
    y = rng.standard_normal(30)
    dataset = _feature_dataset(X, y)
    head = fit_linear_head(dataset, Target.GAIN)
    other = Dataset(records=dataset.records[:-1])
    assert head.train_fingerprint != fit_linear_head(other, Target.GAIN).train_fingerprint


# ---------------------------------------------------------------------------
# evaluate_head / train_and_evaluate
# ---------------------------------------------------------------------------


def test_evaluate_head_noiseless_fit() -> None:
    rng = np.random.default_rng(8)
    X = rng.standard_normal((500, 2))
    y = 4.0 * X[:, 0] + 0.5 * X[:, 1] - 2.0
    dataset = _feature_dataset(X, y)
    train, heldout = split_dataset(dataset, 0.2, seed=0)
    head = fit_linear_head(train, Target.GAIN, ridge_lambda=1e-8)
    report = evaluate_head(head, heldout)
    assert report.heldout_mse < 1e-6
    assert report.heldout_spearman == pytest.approx(1.0, abs=1e-9)
    assert report.n_heldout == len(heldout)


def test_evaluate_head_zero_weight_head_has_no_spearman() -> None:
    head = LinearHead(
        weights=(0.0,),
        bias=1.0,
        target=Target.GAIN,
        feature_mean=(0.0,),
        feature_scale=(1.0,),
    )
    heldout = Dataset(
        records=(
            rec("a", q_small=10, q_large=30, features=(1.0,)),
            rec("b", q_small=20, q_large=25, features=(2.0,)),
        )
    )
    report = evaluate_head(head, heldout)
    assert report.heldout_spearman is None  # constant scores: rank-free


def test_evaluate_head_quality_without_gain_labels() -> None:
    head = LinearHead(
        weights=(1.0,),
        bias=0.0,
        target=Target.QUALITY,
        feature_mean=(0.0,),
        feature_scale=(1.0,),
    )
    heldout = Dataset(
        records=(
            rec("a", q_small=10, features=(1.0,)),
            rec("b", q_small=20, features=(2.0,)),
        )
    )
    report = evaluate_head(head, heldout)
    assert report.heldout_spearman is None
    assert report.heldout_mse >= 0.0


def test_evaluate_head_empty_errors() -> None:
    head = LinearHead(
        weights=(1.0,), bias=0.0, target=Target.GAIN,
        feature_mean=(0.0,), feature_scale=(1.0,),
    )
    with pytest.raises(ConfigError):
        evaluate_head(head, Dataset(records=()))


def test_train_and_evaluate_on_synthetic(planted_dataset) -> None:
    head, report = train_and_evaluate(
        planted_dataset, Target.GAIN, ridge_lambda=1e-6, heldout_ratio=0.2, seed=1
    )
    assert report.n_train + report.n_heldout == len(planted_dataset)
    assert report.train_mse < 2.0  # noise_sigma=1 floor
    assert report.heldout_spearman is not None and report.heldout_spearman > 0.9


def test_quality_head_scores_route_weak_small_outputs(planted_dataset) -> None:
    head, _ = train_and_evaluate(planted_dataset, Target.QUALITY, seed=3)
    assert head.target is Target.QUALITY
