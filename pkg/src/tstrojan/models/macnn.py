"""Multi-scale attention CNN: parallel kernels per block, squeeze-excite
channel attention, pooled stages."""

from collections import OrderedDict

import torch
import torch.nn as nn
import torch.nn.functional as F


class MacnnBlock(nn.Module):
    """Three parallel convolutions (k = 3, 6, 12) with channel attention."""

    def __init__(self, in_channels, branch_filters, reduction=4):
        super().__init__()
        self.kernel_sizes = (3, 6, 12)
        self.convs = nn.ModuleList(
            [nn.Conv1d(in_channels, branch_filters, k, bias=False) for k in self.kernel_sizes]
        )
        out_channels = branch_filters * 3
        self.bn = nn.BatchNorm1d(out_channels)
        hidden = max(1, out_channels // reduction)
        self.fc1 = nn.Linear(out_channels, hidden)
        self.fc2 = nn.Linear(hidden, out_channels)
        self.out_channels = out_channels

    def forward(self, x):
        outs = []
        for k, conv in zip(self.kernel_sizes, self.convs):
            padded = F.pad(x, ((k - 1) // 2, k // 2))
            outs.append(conv(padded))
        feats = F.relu(self.bn(torch.cat(outs, dim=1)))
        squeeze = feats.mean(dim=-1)
        attn = torch.sigmoid(self.fc2(F.relu(self.fc1(squeeze))))
        return feats * attn.unsqueeze(-1)


class MacnnNet(nn.Module):
    """Three stages of attention blocks separated by stride-2 max pooling."""

    def __init__(
        self,
        num_classes,
        input_length,
        stage_filters=(8, 16, 32),
        blocks_per_stage=2,
        reduction=4,
    ):
        super().__init__()
        self.stages = nn.ModuleList()
        in_ch = 1
        for filters in stage_filters:
            stage = nn.Sequential()
            for b in range(blocks_per_stage):
                block = MacnnBlock(in_ch, filters, reduction)
                stage.append(block)
                in_ch = block.out_channels
            self.stages.append(stage)
        self.pool = nn.MaxPool1d(3, stride=2, padding=1)
        self.feature_dim = in_ch
        self.head = nn.Linear(in_ch, num_classes)
        self.probe_points = OrderedDict(
            (f"stage{i + 1}", stage) for i, stage in enumerate(self.stages)
        )

    def forward_features(self, x):
        for i, stage in enumerate(self.stages):
            x = stage(x)
            if i < len(self.stages) - 1:
                x = self.pool(x)
        return x.mean(dim=-1)

    def forward(self, x):
        return self.head(self.forward_features(x))
