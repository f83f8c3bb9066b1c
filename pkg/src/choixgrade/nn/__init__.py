"""Layers, the residual network and the softmax/cross-entropy head."""
from .layers import (BatchNorm2d, Conv2d, Linear, ParamEntry, ResidualBlock, ResidualBlockSpec,
                     batchnorm_forward, cross_entropy_grad, cross_entropy_loss, he_init,
                     residual_block_forward, softmax)
from .model import Model, MiniResNetConfig, build_mini_resnet, forward, predict_logits

__all__ = ["BatchNorm2d", "Conv2d", "Linear", "MiniResNetConfig", "Model", "ParamEntry",
           "ResidualBlock", "ResidualBlockSpec", "batchnorm_forward", "build_mini_resnet",
           "cross_entropy_grad", "cross_entropy_loss", "forward", "he_init", "predict_logits",
           "residual_block_forward", "softmax"]
