import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmamba.autodiff import Tensor, backward, ops, precision
from harmamba.autodiff.tensor import ShapeError
from harmamba.model import (ConfigError, HARMamba, ModelConfig, classify, embed_tokens, n_patches,
                            patch_starts, patchify, predict, revin_denormalize, revin_normalize)
from harmamba.train.optim import AdamW


def small(**kw):
    base = dict(n_channels=3, window=16, n_classes=4, patch_len=4, d_model=8, d_state=4, n_layers=2)
    base.update(kw)
    return ModelConfig(**base)


# RevIN ---------------------------------------------------------------------------

def test_revin_example():
    out, _ = revin_normalize(Tensor(np.array([[[1.0, 2.0, 3.0]]])), Tensor(np.ones(1)))
    np.testing.assert_allclose(out.data.ravel(), [-1.2247, 0.0, 1.2247], atol=1e-4)


def test_revin_constant_channel_is_zero():
    x = np.stack([np.full(10, 4.2), np.arange(10.0)])[None]
    out, _ = revin_normalize(Tensor(x), Tensor(np.ones(2)))
    assert np.isfinite(out.data).all() and np.abs(out.data[0, 0]).max() < 1e-5


def test_revin_rejects_short_input():
    with pytest.raises(ShapeError):
        revin_normalize(Tensor(np.zeros((1, 2, 1))), Tensor(np.ones(2)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(-100, 100), st.floats(0.1, 50))
def test_revin_moments_and_inverse(seed, shift, scale):
    x = np.random.default_rng(seed).standard_normal((2, 3, 20)) * scale + shift
    g, b = np.array([1.0, 2.0, 0.5]), np.array([0.0, 1.0, -1.0])
    with precision("f64"):
        out, stats = revin_normalize(Tensor(x), Tensor(g), Tensor(b))
        plain, _ = revin_normalize(Tensor(x), Tensor(np.ones(3)))
    assert np.abs(plain.data.mean(axis=-1)).max() < 1e-6
    np.testing.assert_allclose(revin_denormalize(out.data, stats, g, b), x, rtol=1e-9, atol=1e-9)


# patching ----------------------------------------------------------------------

def test_patch_counts():
    assert n_patches(10, 4, 2) == 4
    np.testing.assert_array_equal(patch_starts(10, 4, 2), [0, 2, 4, 6])
    assert n_patches(8, 8, 4) == 1
    assert n_patches(512, 16, 8) == 63
    with pytest.raises(ValueError):
        n_patches(3, 4, 2)


def test_patchify_content():
    x = np.arange(20.0).reshape(1, 2, 10)
    p = patchify(Tensor(x), 4, 2).data
    assert p.shape == (1, 2, 4, 4)
    np.testing.assert_array_equal(p[0, 1, 2], [14, 15, 16, 17])


# embedding -------------------------------------------------------------------------

def test_zero_patches_give_position_rows():
    pos = Tensor(np.random.default_rng(0).standard_normal((13, 5)))
    tok = embed_tokens(Tensor(np.zeros((2, 3, 4, 4))), Tensor(np.ones((4, 5))), Tensor(np.zeros(5)),
                       Tensor(np.zeros(5)), pos)
    assert tok.shape == (2, 13, 5)
    np.testing.assert_allclose(tok.data[1], pos.data, rtol=1e-6)


def test_identical_patches_differ_by_position():
    rng = np.random.default_rng(1)
    patches = np.repeat(rng.standard_normal((1, 1, 1, 4)), 3, axis=2)
    pos = Tensor(rng.standard_normal((3, 5)))
    tok = embed_tokens(Tensor(patches), Tensor(rng.standard_normal((4, 5))), Tensor(np.zeros(5)), None, pos).data
    np.testing.assert_allclose(tok[0, 2] - tok[0, 0], pos.data[2] - pos.data[0], atol=1e-5)


def test_token_counts():
    cfg = small(window=10, patch_len=4, patch_stride=2)
    assert cfg.n_tokens == 13
    assert small(window=10, patch_len=4, patch_stride=2, channel_mode="fusion").n_tokens == 5
    assert small(window=10, patch_len=4, patch_stride=2, class_token="none").n_tokens == 12


def test_position_table_mismatch():
    with pytest.raises(ShapeError, match="position"):
        embed_tokens(Tensor(np.zeros((1, 1, 2, 4))), Tensor(np.ones((4, 3))), Tensor(np.zeros(3)), None,
                     Tensor(np.zeros((5, 3))))


# head and loss ---------------------------------------------------------------------

def test_zero_head_is_uniform():
    t = Tensor(np.random.default_rng(2).standard_normal((3, 5, 4)))
    logits = classify(t, Tensor(np.ones(4)), Tensor(np.zeros(4)), [(Tensor(np.zeros((4, 6))), Tensor(np.zeros(6)))])
    np.testing.assert_allclose(ops.softmax(logits).data, 1 / 6, atol=1e-7)


def test_no_class_token_mean_pools():
    rng = np.random.default_rng(3)
    t = rng.standard_normal((2, 5, 4))
    head = [(Tensor(np.eye(4)), Tensor(np.zeros(4)))]
    got = classify(Tensor(t), Tensor(np.ones(4)), Tensor(np.zeros(4)), head, "none").data
    ref = classify(Tensor(t.mean(axis=1, keepdims=True)), Tensor(np.ones(4)), Tensor(np.zeros(4)), head).data
    np.testing.assert_allclose(got, ref, rtol=1e-5)


def test_loss_examples():
    assert abs(ops.cross_entropy(Tensor(np.zeros((3, 6))), np.array([0, 2, 5])).item() - np.log(6)) < 1e-6
    assert ops.cross_entropy(Tensor(np.eye(3) * 1e6), np.arange(3)).item() < 1e-6


# configuration --------------------------------------------------------------------

def test_config_defaults_and_errors():
    cfg = small()
    assert (cfg.patch_stride, cfg.d_inner, cfg.dt_rank) == (2, 16, 1)
    with pytest.raises(ConfigError) as e:
        small(patch_len=32, class_token="start")
    assert len(e.value.problems) == 2
    with pytest.raises(ConfigError, match="unknown"):
        ModelConfig.from_dict({**small().to_dict(), "bogus": 1})


# full forward ----------------------------------------------------------------------

def test_zero_input_gives_finite_logits():
    out = HARMamba(small())(np.zeros((2, 3, 16)))
    assert out.shape == (2, 4) and np.isfinite(out.data).all()


def test_wrong_input_shape():
    with pytest.raises(ShapeError, match="expected input"):
        HARMamba(small())(np.zeros((2, 2, 16)))


def test_batch_permutation_permutes_logits():
    m = HARMamba(small(), seed=1)
    x = np.random.default_rng(4).standard_normal((5, 3, 16))
    perm = np.array([3, 0, 4, 1, 2])
    with precision("f64"):
        a, b = m(x).data, m(x[perm]).data
    np.testing.assert_allclose(b, a[perm], rtol=1e-10, atol=1e-12)


def test_single_channel_modes_agree():
    x = np.random.default_rng(5).standard_normal((2, 1, 16))
    a = HARMamba(small(n_channels=1), seed=2)(x).data
    b = HARMamba(small(n_channels=1, channel_mode="fusion"), seed=2)(x).data
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("c", [0, 1, 2])
def test_channel_only_moves_its_own_tokens(c):
    cfg = small()
    m = HARMamba(cfg)
    x = np.random.default_rng(6).standard_normal((1, 3, 16))
    x2 = x.copy()
    x2[:, c] = 0.0
    a, b = m.tokens(x).data, m.tokens(x2).data
    N = cfg.patches_per_channel
    changed = np.abs(a - b).max(axis=-1)[0] > 0
    expected = np.zeros(cfg.n_tokens, bool)
    expected[c * N:(c + 1) * N] = True
    np.testing.assert_array_equal(changed, expected)


def test_same_seed_same_model():
    x = np.random.default_rng(7).standard_normal((2, 3, 16))
    a, b = HARMamba(small(), seed=3), HARMamba(small(), seed=3)
    np.testing.assert_array_equal(a(x).data, b(x).data)
    assert not np.array_equal(a(x).data, HARMamba(small(), seed=4)(x).data)


def test_init_scales():
    m = HARMamba(small(d_model=64, n_layers=1, window=128, patch_len=8))
    p = m.parameters()
    assert abs(p["embed.W"].data.std() - 0.02) < 0.004
    assert abs(p["pos"].data.std() - 0.02) < 0.002
    assert np.all(p["blocks.0.norm_w"].data == 1) and not p["blocks.0.norm_b"].data.any()


def test_save_load_round_trip(tmp_path):
    m = HARMamba(small(class_token="none", head_layers=2), seed=5)
    m.save(tmp_path / "ck")
    back = HARMamba.load(tmp_path / "ck")
    x = np.random.default_rng(8).standard_normal((3, 3, 16))
    np.testing.assert_array_equal(back(x).data, m(x).data)
    np.testing.assert_array_equal(predict(back, x, batch_size=2), m(x).data)


def test_load_state_mismatch():
    m = HARMamba(small())
    state = m.state_dict()
    state.pop("pos")
    with pytest.raises(KeyError, match="pos"):
        m.load_state_dict(state)


def test_overfits_one_batch():
    rng = np.random.default_rng(9)
    m = HARMamba(small(), seed=0)
    x, y = rng.standard_normal((8, 3, 16)), rng.integers(0, 4, 8)
    opt = AdamW(m.parameters(), lr=3e-3, weight_decay=0.0)
    losses = []
    for _ in range(50):
        opt.zero_grad()
        loss = ops.cross_entropy(m(x), y)
        losses.append(loss.item())
        backward(loss)
        opt.step()
    assert losses[-1] < 0.5 * losses[0]
