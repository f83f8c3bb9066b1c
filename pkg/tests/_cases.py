"""Shared builders for gradient checks and small training runs."""
import numpy as np

from choixgrade.autograd import ops
from choixgrade.nn import MiniResNetConfig, build_mini_resnet, cross_entropy_loss, forward

TINY = MiniResNetConfig(widths=(4, 8), blocks_per_stage=1, image_side=8)


def tiny_model_case(seed, batch=4, mode="train"):
    """Loss closure over every parameter of the tiny network plus its input."""
    rng = np.random.default_rng(seed)
    model = build_mini_resnet(TINY, seed)
    x = rng.uniform(-2, 2, (batch, 1, 8, 8))
    y = rng.integers(0, 5, batch)
    values = {n: e.tensor.data.astype(np.float64) for n, e in model.registry.items()}
    values["input"] = x

    def loss_fn(t):
        model.bind({k: v for k, v in t.items() if k != "input"})
        return cross_entropy_loss(forward(model, t["input"], mode), y)

    return loss_fn, values


def layer_cases(seed):
    """``{name: (loss_fn, values)}``, one per layer type, inputs drawn from [-2, 2]."""
    from choixgrade.autograd.tensor import Tensor
    from choixgrade.nn import ResidualBlockSpec, residual_block_forward

    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-2, 2, shape)  # noqa: E731
    probe = {}

    def weighted(out):
        if out.shape not in probe:
            probe[out.shape] = np.random.default_rng(seed + 7).uniform(-1, 1, out.shape)
        return ops.sum(ops.mul(out, Tensor(probe[out.shape], dtype=out.dtype)))

    y = rng.integers(0, 5, 3)
    spec = ResidualBlockSpec(2, 3, 2)
    cases = {
        "conv2d": (lambda t: weighted(ops.conv2d(t["x"], t["w"], 2, 1)),
                   {"x": u(2, 2, 5, 5), "w": u(3, 2, 3, 3)}),
        "batch_norm": (lambda t: weighted(ops.batch_norm(t["x"], t["g"], t["b"], np.zeros(3),
                                                         np.ones(3), True, 0.1, 1e-5)),
                       {"x": u(4, 3, 3, 3), "g": u(3), "b": u(3)}),
        "relu": (lambda t: weighted(ops.relu(t["x"])), {"x": u(3, 7)}),
        "maxpool2d": (lambda t: weighted(ops.maxpool2d(t["x"], 2)), {"x": u(2, 2, 4, 4)}),
        "global_avg_pool": (lambda t: weighted(ops.global_avg_pool(t["x"])), {"x": u(2, 3, 4, 4)}),
        "linear": (lambda t: weighted(ops.add(ops.matmul(t["x"], t["w"]), t["b"])),
                   {"x": u(4, 6), "w": u(6, 5), "b": u(5)}),
        "cross_entropy": (lambda t: cross_entropy_loss(t["z"], y), {"z": u(3, 5)}),
        "residual_block": (lambda t: weighted(residual_block_forward(
            t["x"], spec, {"conv1": t["c1"], "conv2": t["c2"], "proj": t["p"]})),
            {"x": u(2, 2, 6, 6), "c1": u(3, 2, 3, 3) / 3, "c2": u(3, 3, 3, 3) / 3, "p": u(3, 2, 1, 1)}),
    }
    return cases
