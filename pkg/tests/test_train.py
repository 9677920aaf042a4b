import csv
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn import metrics as skm

from harmamba.autodiff import Tensor
from harmamba.data import synthetic_dataset
from harmamba.model import HARMamba, ModelConfig
from harmamba.train import ablation, cost, metrics
from harmamba.train.optim import AdamW, NonFiniteGradError, OptimState, adamw_step
from harmamba.train.trainer import LOG_COLUMNS, TrainConfig, evaluate, train


def param(v):
    return Tensor(np.asarray(v, dtype=np.float64), requires_grad=True, dtype=np.float64)


def step_with(p, grad, n=1, **kw):
    st_ = OptimState(**kw)
    for _ in range(n):
        adamw_step({"w": p}, st_, {"w": np.asarray(grad, dtype=np.float64)})
    return st_


# AdamW ------------------------------------------------------------------------------

def test_zero_grad_zero_decay_unchanged():
    p = param([1.0, -2.0])
    step_with(p, [0.0, 0.0], n=5, weight_decay=0.0, lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_first_step_size_is_lr():
    p = param([0.5])
    step_with(p, [1.0], lr=0.1, weight_decay=0.0)
    assert abs(p.data[0] - 0.4) < 1e-6


def test_decay_only_is_geometric():
    p = param([2.0])
    step_with(p, [0.0], n=10, lr=0.1, weight_decay=0.5)
    assert abs(p.data[0] - 2.0 * 0.95 ** 10) < 1e-12


def test_zero_lr_bit_identical():
    p = param(np.random.default_rng(0).standard_normal(5))
    before = p.data.tobytes()
    step_with(p, np.ones(5), n=3, lr=0.0)
    assert p.data.tobytes() == before


def adam_reference(w, grads, lr, b1, b2, eps):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return w


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 30))
def test_no_decay_matches_reference_adam(seed, n):
    rng = np.random.default_rng(seed)
    w0 = rng.standard_normal(4)
    grads = rng.standard_normal((n, 4))
    p = param(w0.copy())
    s = OptimState(lr=1e-2, weight_decay=0.0)
    for g in grads:
        adamw_step({"w": p}, s, {"w": g})
    np.testing.assert_allclose(p.data, adam_reference(w0, grads, 1e-2, 0.9, 0.999, 1e-8), atol=1e-7)


def test_non_finite_gradient_rejected_before_update():
    a, b = param([1.0]), param([1.0])
    s = OptimState(lr=0.1)
    with pytest.raises(NonFiniteGradError, match="b"):
        adamw_step({"a": a, "b": b}, s, {"a": np.array([1.0]), "b": np.array([np.nan])})
    assert a.data[0] == 1.0 and s.step == 0


def test_adamw_wrapper_uses_grad():
    p = param([1.0])
    p.grad = np.array([2.0])
    AdamW({"w": p}, lr=0.1, weight_decay=0.0).step()
    assert abs(p.data[0] - 0.9) < 1e-6


# metrics -----------------------------------------------------------------------------

def test_metrics_example():
    cm = metrics.confusion_matrix([0, 0, 1, 1], [0, 1, 1, 1], 2)
    np.testing.assert_array_equal(cm, [[1, 1], [0, 2]])
    assert abs(metrics.weighted_f1(cm) - 0.7333333333) < 1e-9
    assert metrics.accuracy_std(cm) == 0.75


def test_perfect_predictions():
    y = np.array([0, 1, 2, 2, 1])
    r = metrics.report(y, y, 3)
    assert r.accuracy_std == r.accuracy_ovr == r.weighted_f1 == 1.0
    np.testing.assert_array_equal(r.precision, 1.0)


def test_undefined_f1_warns():
    with pytest.warns(RuntimeWarning, match="undefined"):
        f1 = metrics.per_class_f1(metrics.confusion_matrix([0, 1], [0, 0], 3))
    np.testing.assert_allclose(f1, [2 / 3, 0.0, 0.0])


def test_confusion_rejects_bad_labels():
    with pytest.raises(ValueError, match="label 3"):
        metrics.confusion_matrix([0, 3], [0, 1], 3)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 17), st.integers(1, 200), st.integers(0, 2**31))
def test_metrics_match_sklearn(C, n, seed):
    rng = np.random.default_rng(seed)
    y, p = rng.integers(0, C, n), rng.integers(0, C, n)
    cm = metrics.confusion_matrix(y, p, C)
    labels = list(range(C))
    np.testing.assert_array_equal(cm, skm.confusion_matrix(y, p, labels=labels))
    assert abs(metrics.accuracy_std(cm) - skm.accuracy_score(y, p)) < 1e-9
    ref_f1 = skm.f1_score(y, p, labels=labels, average="weighted", zero_division=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert abs(metrics.weighted_f1(cm) - ref_f1) < 1e-9
    mcm = skm.multilabel_confusion_matrix(y, p, labels=labels)
    ovr = np.mean([(m[0, 0] + m[1, 1]) / n for m in mcm])
    assert abs(metrics.accuracy_ovr(cm) - ovr) < 1e-9


def test_confusion_csv(tmp_path):
    metrics.write_confusion_csv(tmp_path / "cm.csv", np.array([[3, 1], [0, 2]]))
    rows = list(csv.reader(open(tmp_path / "cm.csv")))
    assert rows == [["3", "1"], ["0", "2"]]


# trainer --------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_data():
    return synthetic_dataset(n_classes=3, n_channels=2, length=32, n_per_class=20, seed=1)


def tiny_model(ds, **kw):
    base = dict(n_channels=ds.n_channels, window=ds.window, n_classes=ds.n_classes, patch_len=8,
                d_model=8, d_state=4, n_layers=1)
    base.update(kw)
    return ModelConfig(**base)


def test_train_writes_log_and_best(tmp_path, tiny_data):
    res = train(tiny_model(tiny_data), tiny_data, TrainConfig(epochs=3, batch_size=16, lr=3e-3), tmp_path)
    rows = list(csv.reader(open(tmp_path / "train_log.csv")))
    assert tuple(rows[0]) == LOG_COLUMNS and len(rows) == 4
    assert res.best_val_f1 == max(r["val_f1"] for r in res.log)
    best = HARMamba.load(tmp_path / "best")
    a = evaluate(best, tiny_data.x_val, tiny_data.y_val)
    assert abs(a.weighted_f1 - res.best_val_f1) < 1e-12


def test_train_is_deterministic(tmp_path, tiny_data):
    cfg, tc = tiny_model(tiny_data), TrainConfig(epochs=2, batch_size=16, lr=1e-3)
    train(cfg, tiny_data, tc, tmp_path / "a")
    train(cfg, tiny_data, tc, tmp_path / "b")
    for f in ("train_log.csv", "best/model.ssmh", "best/model.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_train_loss_decreases(tiny_data):
    res = train(tiny_model(tiny_data), tiny_data, TrainConfig(epochs=6, batch_size=8, lr=3e-3))
    assert res.log[-1]["train_loss"] < res.log[0]["train_loss"]


def test_train_requires_validation(tiny_data):
    empty = replace(tiny_data, x_val=tiny_data.x_val[:0], y_val=tiny_data.y_val[:0])
    with pytest.raises(ValueError, match="validation"):
        train(tiny_model(tiny_data), empty, TrainConfig(epochs=1))


# ablation -------------------------------------------------------------------------------

def test_unknown_suite_lists_valid():
    with pytest.raises(ValueError, match="directionality.*channel_mode.*class_token"):
        ablation.suite_variants("depth")


def test_suite_labels():
    names = {s: [n for n, _ in ablation.suite_variants(s)] for s in ablation.SUITES}
    assert names == {"directionality": ["SSM", "Bidirectional SSM", "Bidirectional SSM + Conv1D"],
                     "channel_mode": ["Channel Fusion", "Channel Independent"],
                     "class_token": ["No class token", "End class token"]}


def test_run_ablation_csv(tmp_path, tiny_data):
    res = ablation.run_ablation("class_token", tiny_model(tiny_data), tiny_data, seeds=(0, 1),
                                train_config=TrainConfig(epochs=1, batch_size=16), out_dir=tmp_path)
    rows = list(csv.DictReader(open(tmp_path / "ablation_class_token.csv")))
    assert [r["variant"] for r in rows] == ["No class token", "End class token"]
    assert all(r["n_seeds"] == "2" for r in rows) and len(res[0].f1) == 2


# cost -------------------------------------------------------------------------------------

def cost_cfg(**kw):
    base = dict(n_channels=9, window=512, n_classes=12, patch_len=16, patch_stride=8, d_model=64,
                n_layers=4)
    base.update(kw)
    return ModelConfig(**base)


def test_doubling_layers_doubles_block_params():
    a = cost.block_param_count(HARMamba(cost_cfg(n_layers=2)))
    b = cost.block_param_count(HARMamba(cost_cfg(n_layers=4)))
    assert b == 2 * a


def test_block_flops_linear_in_tokens():
    cfg = cost_cfg()
    assert cost.block_flops(cfg, 200) == 2 * cost.block_flops(cfg, 100)
    assert cost.block_flops(replace(cfg, bidirectional=False), 100) < cost.block_flops(cfg, 100)


def test_attention_flops_hand_count():
    assert cost.attention_flops(2, 1) == 12 + 8 + 12 + 8 + 4


def test_cost_ratios():
    r = cost.cost_report(cost_cfg(), [512, 1024, 2048], measure_memory=False)
    for a, b in zip(r, r[1:]):
        assert 1.9 <= b.flops / a.flops <= 2.1
        assert 3.5 <= b.attention_flops / a.attention_flops <= 4.1
    assert r[0].params == r[1].params - (r[1].n_tokens - r[0].n_tokens) * 64
