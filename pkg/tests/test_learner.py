"""Learner-core unit tests: probabilities, updates, masks, FLOPs, meta-init."""

from __future__ import annotations

import logging
import math

import numpy as np
import pytest

from greenloop.errors import RejectedInputError
from greenloop.learner import (Architecture, Batch, UpdateConfig, evaluate, init_model,
                               meta_init, output_layer_mask, predict_proba,
                               predict_proba_batch, regularizer, update, update_flops,
                               weight_count)
from greenloop.samples import LabeledSample


def make_batch(X, y, weights=None, task_id=0):
    X = np.asarray(X, dtype=float)
    weights = [1.0] * len(X) if weights is None else weights
    return Batch(
        samples=tuple(
            LabeledSample(sample_id=i, features=X[i], label=int(y[i]), weight=weights[i])
            for i in range(len(X))
        ),
        task_id=task_id,
    )


def logistic_model(weights, d_in, n_classes):
    return init_model(Architecture.LOGISTIC, d_in, n_classes, zero=True).__class__(
        version=0, weights=np.asarray(weights, dtype=float),
        architecture=Architecture.LOGISTIC, d_in=d_in, n_classes=n_classes)


# -- predict_proba -----------------------------------------------------------

def test_zero_weight_logistic_is_uniform():
    model = init_model(Architecture.LOGISTIC, 3, 2, zero=True)
    p = predict_proba(model, np.array([0.7, -1.2, 3.0]))
    assert p == pytest.approx([0.5, 0.5], abs=1e-12)


def test_equal_logits_is_uniform():
    # w = (1, 0 | bias 0) vs (0, 0 | bias 0), x = (0, 0): logits are equal
    model = logistic_model([1.0, 0.0, 0.0, 0.0, 0.0, 0.0], d_in=2, n_classes=2)
    p = predict_proba(model, np.zeros(2))
    assert p == pytest.approx([0.5, 0.5], abs=1e-12)


def test_hand_softmax_logits_two_zero():
    # logits (2, 0) via bias-only weights
    model = logistic_model([0.0, 0.0, 2.0, 0.0], d_in=1, n_classes=2)
    p = predict_proba(model, np.zeros(1))
    expected0 = math.exp(2.0) / (math.exp(2.0) + 1.0)
    assert p[0] == pytest.approx(expected0, abs=1e-12)
    assert p[1] == pytest.approx(1.0 - expected0, abs=1e-12)


def test_predict_rejects_dimension_mismatch():
    model = init_model(Architecture.LOGISTIC, 3, 2, seed=1)
    with pytest.raises(RejectedInputError):
        predict_proba(model, np.zeros(4))


@pytest.mark.parametrize("arch,hidden", [(Architecture.LOGISTIC, 0), (Architecture.MLP, 6)])
def test_probability_rows_sum_to_one(arch, hidden):
    rng = np.random.default_rng(0)
    for draw in range(50):
        d, c = int(rng.integers(1, 6)), int(rng.integers(2, 5))
        n = weight_count(arch, d, c, hidden)
        model = init_model(arch, d, c, hidden, seed=draw).__class__(
            version=0, weights=rng.normal(scale=1.0, size=n), architecture=arch,
            d_in=d, n_classes=c, hidden_width=hidden)
        X = rng.normal(scale=2.0, size=(4, d))
        P = predict_proba_batch(model, X)
        assert np.all(np.abs(P.sum(axis=1) - 1.0) <= 1e-9)
        assert np.all(P > 0) and np.all(P < 1)


# -- update ------------------------------------------------------------------

def test_zero_learning_rate_is_identity_with_version_bump():
    model = init_model(Architecture.LOGISTIC, 2, 2, seed=5)
    batch = make_batch([[1.0, 2.0]], [1])
    result = update(model, batch, UpdateConfig(learning_rate=0.0, epochs=3))
    assert result.error is None
    assert result.model.version == model.version + 1
    assert np.array_equal(result.model.weights, model.weights)


def test_shallow_mask_freezes_hidden_layer_bitwise():
    model = init_model(Architecture.MLP, 3, 2, hidden_width=4, seed=2)
    mask = output_layer_mask(model)
    batch = make_batch([[1.0, -0.5, 2.0], [0.3, 0.1, -1.0]], [0, 1])
    result = update(model, batch, UpdateConfig(learning_rate=0.5, epochs=4, pathway_mask=mask))
    hidden_size = model.hidden_width * model.d_in + model.hidden_width
    before = model.weights[:hidden_size].tobytes()
    after = result.model.weights[:hidden_size].tobytes()
    assert before == after
    assert not np.array_equal(result.model.weights[hidden_size:], model.weights[hidden_size:])


def test_hand_gradient_single_sample():
    # 1-D logistic, x=1, y=1, lr=0.1, one epoch from zero weights:
    # dL/dz = p - onehot(1) = (0.5, -0.5), so the class-1 weight moves to
    # 0.1 * (1 - 0.5) * 1 = 0.05 and class 0 mirrors to -0.05; biases match.
    model = init_model(Architecture.LOGISTIC, 1, 2, zero=True)
    batch = make_batch([[1.0]], [1])
    result = update(model, batch, UpdateConfig(learning_rate=0.1, epochs=1))
    w = result.model.weights  # layout: W[0,0], W[1,0], b[0], b[1]
    assert w[1] == pytest.approx(0.05, abs=1e-15)
    assert w[0] == pytest.approx(-0.05, abs=1e-15)
    assert w[3] == pytest.approx(0.05, abs=1e-15)
    assert w[2] == pytest.approx(-0.05, abs=1e-15)


def test_non_finite_gradient_aborts_with_unchanged_model():
    model = logistic_model([1e200, -1e200, 0.0, 0.0], d_in=1, n_classes=2)
    batch = make_batch([[1e200]], [0])
    result = update(model, batch, UpdateConfig(learning_rate=0.1, epochs=2))
    assert result.error == "non_finite_gradient"
    assert result.model is model
    assert result.flops == 0


def test_loss_increase_is_logged(caplog):
    # non-separable labels with an oversized step diverge; only logged
    model = init_model(Architecture.LOGISTIC, 1, 2, zero=True)
    batch = make_batch([[1.0], [2.0], [3.0]], [1, 0, 1])
    with caplog.at_level(logging.WARNING, logger="greenloop.learner"):
        result = update(model, batch, UpdateConfig(learning_rate=15.0, epochs=6))
    assert result.error is None
    assert result.loss_after > result.loss_before
    assert any("training loss rose" in r.message for r in caplog.records)


def test_flop_count_formula_and_determinism():
    model = init_model(Architecture.MLP, 3, 2, hidden_width=4, seed=0)
    full = np.ones(model.weights.shape[0], dtype=bool)
    shallow = output_layer_mask(model)
    n_full, n_shallow = int(full.sum()), int(shallow.sum())
    batch = make_batch(np.zeros((7, 3)), [0] * 7)
    for mask, trainable in [(full, n_full), (shallow, n_shallow)]:
        r1 = update(model, batch, UpdateConfig(learning_rate=0.1, epochs=3, pathway_mask=mask))
        r2 = update(model, batch, UpdateConfig(learning_rate=0.9, epochs=3, pathway_mask=mask))
        assert r1.flops == r2.flops == 3 * 7 * 6 * trainable
        assert r1.flops == update_flops(model, mask, 7, 3)


def test_version_strictly_increases_over_update_chain():
    model = init_model(Architecture.LOGISTIC, 2, 2, seed=3)
    batch = make_batch([[1.0, 0.0], [0.0, 1.0]], [0, 1])
    versions = [model.version]
    for _ in range(5):
        model = update(model, batch, UpdateConfig(learning_rate=0.1)).model
        versions.append(model.version)
    assert versions == sorted(set(versions))


def test_weighted_mean_loss_matches_manual():
    model = init_model(Architecture.LOGISTIC, 2, 2, seed=9)
    X = np.array([[1.0, 0.0], [0.0, 2.0]])
    y = [0, 1]
    batch = make_batch(X, y, weights=[1.0, 3.0])
    P = predict_proba_batch(model, X)
    expected = -(1.0 * math.log(P[0, 0]) + 3.0 * math.log(P[1, 1])) / 4.0
    result = update(model, batch, UpdateConfig(learning_rate=0.0))
    assert result.loss_before == pytest.approx(expected, rel=1e-12)


# -- evaluate ----------------------------------------------------------------

def test_perfect_predictor_loss_and_accuracy():
    # huge aligned weights drive the softmax toward one-hot
    model = logistic_model([-50.0, 50.0, 0.0, 0.0], d_in=1, n_classes=2)
    batch = make_batch([[1.0], [-1.0]], [1, 0])
    report = evaluate(model, batch)
    assert report.accuracy == 1.0
    assert report.mean_loss < 1e-9


def test_uniform_predictor_ln2_and_tiebreak():
    model = init_model(Architecture.LOGISTIC, 2, 2, zero=True)
    batch = make_batch([[1.0, 2.0], [0.5, -1.0]], [0, 1])
    report = evaluate(model, batch)
    assert report.mean_loss == pytest.approx(math.log(2.0), abs=1e-12)
    # ties break to the lowest class index, so only the label-0 sample scores
    assert report.accuracy == 0.5


def test_three_sample_hand_loss():
    # logits (x, 0) give p(class0) = sigmoid(x); choose x for probs .8/.6/.3
    def logit(p):
        return math.log(p / (1.0 - p))

    model = logistic_model([1.0, 0.0, 0.0, 0.0], d_in=1, n_classes=2)
    batch = make_batch([[logit(0.8)], [logit(0.6)], [logit(0.3)]], [0, 0, 1])
    expected = -(math.log(0.8) + math.log(0.6) + math.log(0.7)) / 3.0
    report = evaluate(model, batch)
    assert report.mean_loss == pytest.approx(expected, rel=1e-12)


def test_empty_batch_rejected():
    with pytest.raises(RejectedInputError):
        Batch(samples=(), task_id=0)


def test_label_out_of_range_rejected():
    model = init_model(Architecture.LOGISTIC, 1, 2, seed=0)
    with pytest.raises(RejectedInputError):
        evaluate(model, make_batch([[1.0]], [5]))


# -- regularizer -------------------------------------------------------------

def test_regularizer_zero_for_zero_weights():
    assert regularizer(init_model(Architecture.LOGISTIC, 2, 3, zero=True)) == 0.0


def test_regularizer_single_weight_unit_scale():
    model = logistic_model([2.0, 0.0, 0.0, 0.0], d_in=1, n_classes=2)
    assert regularizer(model, scale=1.0) == pytest.approx(4.0, abs=1e-15)


def test_regularizer_respects_pathway_mask():
    base = init_model(Architecture.MLP, 2, 2, hidden_width=3, seed=4)
    mask = output_layer_mask(base)
    model = base.__class__(version=0, weights=base.weights, architecture=base.architecture,
                           d_in=2, n_classes=2, hidden_width=3, pathway_mask=mask)
    expected = float(np.sum(base.weights[mask] ** 2))
    full_norm = float(np.sum(base.weights ** 2))
    assert regularizer(model) == pytest.approx(expected, rel=1e-12)
    assert regularizer(model) < full_norm


# -- meta_init ---------------------------------------------------------------

def _task_batch(angle, n, rng, offset=0):
    w = np.array([math.cos(angle), math.sin(angle)])
    X = rng.normal(size=(n, 2)) * 2.0
    y = (X @ w > 0).astype(int)
    return make_batch(X, y)


def test_meta_init_zero_outer_lr_returns_template():
    template = init_model(Architecture.LOGISTIC, 2, 2, seed=11)
    rng = np.random.default_rng(0)
    meta = meta_init(iter([_task_batch(0.3, 8, rng)]), steps=1, inner_lr=0.5,
                     outer_lr=0.0, template=template)
    assert np.array_equal(meta.weights, template.weights)


def test_meta_init_full_outer_lr_equals_adapted():
    template = init_model(Architecture.LOGISTIC, 2, 2, seed=11)
    rng = np.random.default_rng(1)
    batch = _task_batch(0.5, 8, rng)
    meta = meta_init(iter([batch]), steps=1, inner_lr=0.3, outer_lr=1.0,
                     template=template, inner_epochs=2)
    adapted = update(template, batch,
                     UpdateConfig(learning_rate=0.3, epochs=2)).model
    assert np.allclose(meta.weights, adapted.weights, rtol=1e-12, atol=1e-15)


def _manual_softmax_grad(w_flat, X, y):
    # independent implementation: softmax cross-entropy gradient, 2 classes, flat layout
    W = w_flat[:2 * X.shape[1]].reshape(2, X.shape[1])
    b = w_flat[2 * X.shape[1]:]
    Z = X @ W.T + b
    Z = Z - Z.max(axis=1, keepdims=True)
    P = np.exp(Z) / np.exp(Z).sum(axis=1, keepdims=True)
    dZ = P.copy()
    dZ[np.arange(len(y)), y] -= 1.0
    dZ /= len(y)
    return np.concatenate([(dZ.T @ X).ravel(), dZ.sum(axis=0)])


def test_meta_init_mirrored_tasks_matches_hand_simulation():
    template = init_model(Architecture.LOGISTIC, 2, 2, zero=True)
    Xa = np.array([[1.0, 0.0], [-1.0, 0.0]])
    ya = np.array([1, 0])
    task_a = make_batch(Xa, ya)
    task_b = make_batch(-Xa, ya)  # mirrored through the origin
    inner_lr, outer_lr = 0.4, 0.5

    meta = meta_init(iter([task_a, task_b]), steps=2, inner_lr=inner_lr,
                     outer_lr=outer_lr, template=template, inner_epochs=1)

    # hand simulation of the same interpolation
    w = np.zeros(6)
    for X, y in [(Xa, ya), (-Xa, ya)]:
        adapted = w - inner_lr * _manual_softmax_grad(w, X, y)
        w = w + outer_lr * (adapted - w)
    assert np.allclose(meta.weights, w, atol=1e-12)

    # mirrored tasks pull in opposite directions: the result stays near the
    # midpoint of the two one-step solutions (which is the origin)
    adapted_a = -inner_lr * _manual_softmax_grad(np.zeros(6), Xa, ya)
    assert np.linalg.norm(meta.weights) <= 0.5 * np.linalg.norm(adapted_a)


def test_meta_init_rejects_dimension_mismatch():
    template = init_model(Architecture.LOGISTIC, 3, 2, seed=0)
    rng = np.random.default_rng(2)
    with pytest.raises(RejectedInputError):
        meta_init(iter([_task_batch(0.1, 4, rng)]), steps=1, inner_lr=0.1,
                  outer_lr=0.5, template=template)


def test_meta_init_rejects_zero_steps():
    template = init_model(Architecture.LOGISTIC, 2, 2, seed=0)
    with pytest.raises(RejectedInputError):
        meta_init(iter([]), steps=0, inner_lr=0.1, outer_lr=0.5, template=template)


def test_meta_init_warm_start_beats_zero_init_statistically():
    # tasks share a boundary direction up to +-45 degrees; after meta
    # training, few-shot adaptation from the warm start should do no worse
    # than from a cold zero init on held-out tasks (fixed seeds).
    def sampler(rng, n=16):
        while True:
            yield _task_batch(rng.uniform(-math.pi / 4, math.pi / 4), n, rng)

    def fewshot_loss(init_state, angle, rng):
        support = _task_batch(angle, 8, rng)
        model = init_state
        for _ in range(2):
            model = update(model, support, UpdateConfig(learning_rate=0.5, epochs=1)).model
        return evaluate(model, _task_batch(angle, 200, rng)).mean_loss

    rng = np.random.default_rng(42)
    template = init_model(Architecture.LOGISTIC, 2, 2, seed=7)
    meta = meta_init(sampler(rng), steps=40, inner_lr=0.5, outer_lr=0.5,
                     template=template, inner_epochs=2)
    zero = init_model(Architecture.LOGISTIC, 2, 2, zero=True)
    angles = np.random.default_rng(123).uniform(-math.pi / 4, math.pi / 4, size=20)
    meta_losses = [fewshot_loss(meta, a, np.random.default_rng(5000 + i))
                   for i, a in enumerate(angles)]
    zero_losses = [fewshot_loss(zero, a, np.random.default_rng(5000 + i))
                   for i, a in enumerate(angles)]
    assert np.mean(meta_losses) <= np.mean(zero_losses)
