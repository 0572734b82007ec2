"""Temporal convolutional network with dilated causal convolutions."""

from collections import OrderedDict

import torch.nn as nn
import torch.nn.functional as F


class Chomp1d(nn.Module):
    """Drop trailing padding so the convolution stays causal."""

    def __init__(self, size):
        super().__init__()
        self.size = size

    def forward(self, x):
        return x[:, :, : -self.size].contiguous() if self.size > 0 else x


class TemporalBlock(nn.Module):
    def __init__(self, in_channels, out_channels, kernel_size, dilation, dropout):
        super().__init__()
        padding = (kernel_size - 1) * dilation
        self.net = nn.Sequential(
            nn.Conv1d(in_channels, out_channels, kernel_size, padding=padding, dilation=dilation),
            Chomp1d(padding),
            nn.BatchNorm1d(out_channels),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Conv1d(out_channels, out_channels, kernel_size, padding=padding, dilation=dilation),
            Chomp1d(padding),
            nn.BatchNorm1d(out_channels),
            nn.ReLU(),
            nn.Dropout(dropout),
        )
        self.downsample = (
            nn.Conv1d(in_channels, out_channels, 1) if in_channels != out_channels else None
        )

    def forward(self, x):
        res = x if self.downsample is None else self.downsample(x)
        return F.relu(self.net(x) + res)


class TcnNet(nn.Module):
    """Stack of temporal blocks with doubling dilation; the classifier
    reads the last time step."""

    def __init__(
        self,
        num_classes,
        input_length,
        channels=(12, 12, 12, 12, 12),
        kernel_size=7,
        dropout=0.0,
    ):
        super().__init__()
        blocks = []
        in_ch = 1
        for i, out_ch in enumerate(channels):
            blocks.append(TemporalBlock(in_ch, out_ch, kernel_size, 2**i, dropout))
            in_ch = out_ch
        self.blocks = nn.ModuleList(blocks)
        self.feature_dim = in_ch
        self.head = nn.Linear(in_ch, num_classes)
        self.probe_points = OrderedDict(
            (f"tblock{i + 1}", block) for i, block in enumerate(self.blocks)
        )

    def forward_features(self, x):
        for block in self.blocks:
            x = block(x)
        return x[:, :, -1]

    def forward(self, x):
        return self.head(self.forward_features(x))
