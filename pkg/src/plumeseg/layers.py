"""Shared convolutional building blocks."""

import math

import torch
from torch import nn


def group_norm(channels: int) -> nn.GroupNorm:
    # largest power-of-two group count up to 8 that divides the channel width
    return nn.GroupNorm(math.gcd(8, channels), channels)


class BasicConv2d(nn.Module):
    """Convolution followed by group normalization, no activation."""

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, dilation=1):
        super().__init__()
        self.conv = nn.Conv2d(
            in_channels, out_channels, kernel_size,
            stride=stride, padding=padding, dilation=dilation, bias=False,
        )
        self.norm = group_norm(out_channels)

    def forward(self, x):
        return self.norm(self.conv(x))


def parameter_count(module: nn.Module) -> int:
    """Number of trainable scalars in a module."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
