import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _cases import TINY, layer_cases, tiny_model_case
from choixgrade.autograd import Tape, Tensor, backward, ops
from choixgrade.errors import InvalidConfig, ShapeMismatch, TargetOutOfRange
from choixgrade.gradcheck import check_gradients, precision_gap
from choixgrade.nn import (BatchNorm2d, MiniResNetConfig, ResidualBlock, ResidualBlockSpec,
                           build_mini_resnet, cross_entropy_grad, cross_entropy_loss, forward,
                           he_init, predict_logits, residual_block_forward, softmax)

ROOT = Path(__file__).resolve().parents[1]
seeds = st.integers(0, 2**31 - 1)


# -- init ---------------------------------------------------------------------

def test_he_init_variance():
    t = he_init((100_000,), fan_in=50, seed=3, name="w")
    assert t.dtype == np.float32 and t.requires_grad
    w = t.data.astype(np.float64)
    assert abs(w.var() / (2 / 50) - 1) < 0.05
    assert abs(w.mean()) < 0.01


def test_he_init_streams():
    a = he_init((5, 5), 5, seed=1, name="a").data
    assert np.array_equal(a, he_init((5, 5), 5, seed=1, name="a").data)
    assert not np.array_equal(a, he_init((5, 5), 5, seed=1, name="b").data)
    assert not np.array_equal(a, he_init((5, 5), 5, seed=2, name="a").data)
    with pytest.raises(InvalidConfig):
        he_init((1,), 0, 0)


# -- residual block -----------------------------------------------------------

@pytest.mark.parametrize("bn", [True, False])
def test_zeroed_branch_is_relu(bn, rng):
    """With F = 0 and the identity shortcut, the block is exactly relu."""
    spec = ResidualBlockSpec(3, 3, 1, use_batchnorm=bn)
    x = rng.standard_normal((2, 3, 6, 6)).astype(np.float32)
    params = {"conv1": Tensor(rng.standard_normal((3, 3, 3, 3))), "conv2": Tensor(np.zeros((3, 3, 3, 3)))}
    for mode in ("train", "eval"):
        out = residual_block_forward(Tensor(x), spec, params, mode)
        assert out.dtype == np.float32
        assert np.array_equal(out.data, np.maximum(x, 0))


def test_zeroed_branch_with_zero_gamma(rng):
    spec = ResidualBlockSpec(2, 2)
    x = rng.standard_normal((3, 2, 4, 4)).astype(np.float32)
    bn = (Tensor(np.zeros(2)), Tensor(np.zeros(2)), np.zeros(2, np.float32), np.ones(2, np.float32))
    params = {"conv1": Tensor(rng.standard_normal((2, 2, 3, 3))),
              "conv2": Tensor(rng.standard_normal((2, 2, 3, 3))), "bn1": bn, "bn2": bn}
    assert np.array_equal(residual_block_forward(Tensor(x), spec, params).data, np.maximum(x, 0))


@pytest.mark.parametrize("ci,co,stride,proj", [(4, 4, 1, False), (4, 8, 1, True),
                                               (4, 4, 2, True), (16, 32, 2, True)])
def test_projection_iff_shape_changes(ci, co, stride, proj):
    spec = ResidualBlockSpec(ci, co, stride)
    assert spec.uses_projection is proj
    block = ResidualBlock(spec)
    assert (block.proj is not None) is proj
    out = block(Tensor(np.ones((2, ci, 8, 8))), True)
    assert out.shape == (2, co, 8 // stride, 8 // stride)


def test_projection_example():
    block = ResidualBlock(ResidualBlockSpec(16, 32, 2), seed=1)
    assert block(Tensor(np.random.default_rng(0).standard_normal((2, 16, 8, 8))), True).shape == (2, 32, 4, 4)
    with pytest.raises(ShapeMismatch):
        block(Tensor(np.zeros((2, 8, 8, 8))), True)


def test_block_output_nonnegative(rng):
    block = ResidualBlock(ResidualBlockSpec(3, 5, 2), seed=4)
    assert block(Tensor(rng.standard_normal((2, 3, 7, 7))), True).data.min() >= 0


# -- batch norm ---------------------------------------------------------------

def test_batchnorm_train_normalises(rng):
    bn = BatchNorm2d(3)
    x = rng.normal(5, 3, (8, 3, 4, 4)).astype(np.float32)
    y = bn(Tensor(x), True).data.astype(np.float64)
    assert np.allclose(y.mean(axis=(0, 2, 3)), 0, atol=1e-5)
    assert np.allclose(y.var(axis=(0, 2, 3)), 1, atol=1e-3)
    # running stats moved 10% of the way from (0, 1)
    assert np.allclose(bn.running_mean, 0.1 * x.mean(axis=(0, 2, 3)), rtol=1e-5)


def test_batchnorm_eval_uses_running_stats(rng):
    bn = BatchNorm2d(2)
    bn.running_mean[:] = [1.0, -1.0]
    bn.running_var[:] = [4.0, 0.25]
    x = rng.standard_normal((3, 2, 2, 2)).astype(np.float32)
    expected = (x - bn.running_mean[:, None, None]) / np.sqrt(bn.running_var[:, None, None] + 1e-5)
    assert np.allclose(bn(Tensor(x), False).data, expected, atol=1e-6)


def test_frozen_batchnorm_keeps_statistics(rng):
    model = build_mini_resnet(TINY, 0)
    model.freeze_all_but(model.head_names)
    before = {k: v.copy() for k, v in model.buffers.items()}
    forward(model, rng.standard_normal((4, 1, 8, 8)), "train")
    assert all(np.array_equal(before[k], v) for k, v in model.buffers.items())
    model.unfreeze_all()
    forward(model, rng.standard_normal((4, 1, 8, 8)), "train")
    assert not all(np.array_equal(before[k], v) for k, v in model.buffers.items())


# -- softmax and cross-entropy ------------------------------------------------

def test_softmax_examples():
    assert np.allclose(softmax(np.zeros((1, 5))).data, 0.2)
    p = softmax(np.array([[1000.0, 0.0]])).data
    assert np.all(np.isfinite(p)) and p[0, 0] == 1.0
    assert np.allclose(softmax(np.array([[1.0, 2.0, 3.0]])).data,
                       softmax(np.array([[11.0, 12.0, 13.0]])).data)


@given(seeds)
def test_softmax_rows_sum_to_one(seed):
    z = np.random.default_rng(seed).normal(0, 20, (4, 5))
    p = softmax(z).data
    assert np.allclose(p.sum(axis=1), 1) and p.min() >= 0


def test_cross_entropy_uniform_is_ln5():
    loss = cross_entropy_loss(Tensor(np.zeros((7, 5))), np.arange(7) % 5)
    assert abs(float(loss.data) - math.log(5)) < 1e-5
    loss = cross_entropy_loss(Tensor(np.full((3, 5), 2.5)), [0, 4, 2])
    assert abs(float(loss.data) - math.log(5)) < 1e-5


def test_cross_entropy_confident_and_errors():
    z = np.zeros((1, 5), np.float32)
    z[0, 2] = 100
    assert float(cross_entropy_loss(Tensor(z), [2]).data) < 1e-6
    assert np.isfinite(float(cross_entropy_loss(Tensor(-z), [2]).data))
    with pytest.raises(TargetOutOfRange):
        cross_entropy_loss(Tensor(np.zeros((2, 5))), [0, 5])
    with pytest.raises(ShapeMismatch):
        cross_entropy_loss(Tensor(np.zeros((2, 5))), [0])


def _softmax_oracle(z):
    """Plain float64 softmax, written independently of the package."""
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@given(seeds, st.integers(1, 16))
def test_cross_entropy_gradient_closed_form(seed, n):
    rng = np.random.default_rng(seed)
    z = rng.normal(0, 3, (n, 5)).astype(np.float32)
    y = rng.integers(0, 5, n)
    oracle = _softmax_oracle(z.astype(np.float64))
    oracle[np.arange(n), y] -= 1
    oracle /= n
    t = Tensor(z, requires_grad=True)
    with Tape() as tape:
        loss = cross_entropy_loss(t, y)
    backward(loss, tape)
    assert np.abs(t.grad - oracle).max() < 1e-6
    assert np.abs(cross_entropy_grad(z, y) - oracle).max() < 1e-6


def test_cross_entropy_grad_against_torch(rng):
    torch = pytest.importorskip("torch")
    z = rng.normal(0, 2, (6, 5))
    y = rng.integers(0, 5, 6)
    tz = torch.tensor(z, requires_grad=True)
    torch.nn.functional.cross_entropy(tz, torch.tensor(y)).backward()
    assert np.abs(cross_entropy_grad(z, y) - tz.grad.numpy()).max() < 1e-12


# -- gradient checks ----------------------------------------------------------

@pytest.mark.parametrize("name", sorted(layer_cases(0)))
@settings(max_examples=20)
@given(seed=seeds)
def test_layer_gradcheck(name, seed):
    loss_fn, values = layer_cases(seed)[name]
    res = check_gradients(loss_fn, values, h=1e-3)
    assert res.checked > 0 and res.max_rel_error < 1e-2, res
    assert max(precision_gap(loss_fn, values).values()) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_tiny_model_gradcheck(seed):
    loss_fn, values = tiny_model_case(seed)
    res = check_gradients(loss_fn, values, h=1e-3)
    assert res.checked > 0.5 * sum(v.size for v in values.values())
    assert res.max_rel_error < 1e-2, res
    assert max(precision_gap(loss_fn, values).values()) < 1e-4


def test_tiny_model_gradcheck_eval_mode():
    loss_fn, values = tiny_model_case(123, mode="eval")
    res = check_gradients(loss_fn, values)
    assert res.max_rel_error < 1e-2, res


# -- whole model --------------------------------------------------------------

def test_default_model_shapes():
    model = build_mini_resnet()
    assert model.conv_layer_count() == 13
    x = np.random.default_rng(0).standard_normal((3, 1, 64, 64)).astype(np.float32)
    assert forward(model, x).shape == (3, 5)
    with pytest.raises(ShapeMismatch):
        forward(model, np.zeros((3, 1, 32, 32), np.float32))


@pytest.mark.parametrize("widths,blocks", [((16, 32, 64), 2), ((4, 8), 1), ((8, 16, 32, 64), 3)])
def test_parameter_count_matches_hand_count(widths, blocks):
    out = subprocess.run([sys.executable, str(ROOT / "tools" / "count_params.py"),
                          "--widths", ",".join(map(str, widths)), "--blocks", str(blocks)],
                         capture_output=True, text=True, check=True)
    model = build_mini_resnet(MiniResNetConfig(widths=widths, blocks_per_stage=blocks))
    assert model.parameter_count() == int(out.stdout)


def test_default_parameter_count():
    assert build_mini_resnet().parameter_count() == 174453


def test_invalid_configs():
    for cfg in (MiniResNetConfig(widths=()), MiniResNetConfig(widths=(0, 4)),
                MiniResNetConfig(blocks_per_stage=0), MiniResNetConfig(num_classes=4)):
        with pytest.raises(InvalidConfig):
            build_mini_resnet(cfg)


def test_builds_are_deterministic():
    a, b = build_mini_resnet(TINY, 9), build_mini_resnet(TINY, 9)
    assert all(np.array_equal(x, b.state()[k]) for k, x in a.state().items())
    c = build_mini_resnet(TINY, 10)
    assert not np.array_equal(a.state()["stem.conv.weight"], c.state()["stem.conv.weight"])


def test_eval_is_batch_independent(rng):
    model = build_mini_resnet(TINY, 2)
    forward(model, rng.standard_normal((16, 1, 8, 8)), "train")  # move running stats off (0, 1)
    x = rng.standard_normal((10, 1, 8, 8)).astype(np.float32)
    full = predict_logits(model, x)
    singles = np.concatenate([predict_logits(model, x[i:i + 1]) for i in range(10)])
    assert np.abs(full - singles).max() < 1e-5


def test_logits_finite_over_many_batches(rng):
    model = build_mini_resnet(TINY, 3)
    for _ in range(100):
        x = rng.uniform(0, 1, (4, 1, 8, 8)).astype(np.float32)
        assert np.all(np.isfinite(forward(model, x, "train").data))
    assert np.all(np.isfinite(predict_logits(model, rng.uniform(0, 1, (4, 1, 8, 8)))))


def test_bind_swaps_and_restores():
    model = build_mini_resnet(TINY, 0)
    original = model.fc.weight
    old = model.bind({"fc.weight": Tensor(np.zeros(original.shape))})
    assert old["fc.weight"] is original
    assert np.all(forward(model, np.ones((2, 1, 8, 8))).data == 0)
    model.bind(old)
    assert model.fc.weight is original
