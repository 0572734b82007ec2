"""Inception-style classifier with multi-scale temporal convolutions."""

from collections import OrderedDict

import torch
import torch.nn as nn
import torch.nn.functional as F


class InceptionModule(nn.Module):
    """Parallel convolutions at several kernel sizes plus a max-pool branch."""

    def __init__(self, in_channels, branch_filters, kernel_sizes, bottleneck_channels):
        super().__init__()
        self.bottleneck = nn.Conv1d(in_channels, bottleneck_channels, 1, bias=False)
        self.convs = nn.ModuleList(
            [
                nn.Conv1d(bottleneck_channels, branch_filters, k, padding=k // 2, bias=False)
                for k in kernel_sizes
            ]
        )
        self.maxpool = nn.MaxPool1d(3, stride=1, padding=1)
        self.maxpool_conv = nn.Conv1d(in_channels, branch_filters, 1, bias=False)
        self.bn = nn.BatchNorm1d(branch_filters * (len(kernel_sizes) + 1))

    def forward(self, x):
        bottled = self.bottleneck(x)
        outs = [conv(bottled) for conv in self.convs]
        outs.append(self.maxpool_conv(self.maxpool(x)))
        return F.relu(self.bn(torch.cat(outs, dim=1)))


class InceptionBlock(nn.Module):
    """Inception module with a 1x1 residual shortcut."""

    def __init__(self, in_channels, branch_filters, kernel_sizes, bottleneck_channels):
        super().__init__()
        self.inception = InceptionModule(
            in_channels, branch_filters, kernel_sizes, bottleneck_channels
        )
        self.out_channels = branch_filters * (len(kernel_sizes) + 1)
        self.residual = nn.Sequential(
            nn.Conv1d(in_channels, self.out_channels, 1, bias=False),
            nn.BatchNorm1d(self.out_channels),
        )

    def forward(self, x):
        return F.relu(self.inception(x) + self.residual(x))


class InceptionNet(nn.Module):
    """Stack of inception blocks, global average pooling, linear head.

    Default widths are deliberately small (8 filters per branch, i.e.
    32-channel blocks, depth 3) so long training runs stay CPU-friendly.
    """

    def __init__(
        self,
        num_classes,
        input_length,
        branch_filters=8,
        depth=3,
        kernel_sizes=(9, 19, 39),
        bottleneck_channels=8,
    ):
        super().__init__()
        blocks = []
        in_ch = 1
        for _ in range(depth):
            block = InceptionBlock(in_ch, branch_filters, kernel_sizes, bottleneck_channels)
            blocks.append(block)
            in_ch = block.out_channels
        self.blocks = nn.ModuleList(blocks)
        self.feature_dim = in_ch
        self.head = nn.Linear(in_ch, num_classes)
        self.probe_points = OrderedDict(
            (f"block{i + 1}", block) for i, block in enumerate(self.blocks)
        )

    def forward_features(self, x):
        for block in self.blocks:
            x = block(x)
        return x.mean(dim=-1)

    def forward(self, x):
        return self.head(self.forward_features(x))
