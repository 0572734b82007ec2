"""LSTM-FCN: a gated branch over the dimension-shuffled series in parallel
with a fully convolutional branch."""

from collections import OrderedDict

import torch
import torch.nn as nn
import torch.nn.functional as F


class ConvBlock(nn.Module):
    """Conv1d + BatchNorm + ReLU keeping the temporal length (same padding)."""

    def __init__(self, in_channels, out_channels, kernel_size):
        super().__init__()
        self.pad = ((kernel_size - 1) // 2, kernel_size // 2)
        self.conv = nn.Conv1d(in_channels, out_channels, kernel_size, bias=False)
        self.bn = nn.BatchNorm1d(out_channels)

    def forward(self, x):
        return F.relu(self.bn(self.conv(F.pad(x, self.pad))))


class LstmFcnNet(nn.Module):
    """Two-branch classifier.

    The recurrent branch sees the whole series as a single time step with
    L features (the dimension shuffle of the original architecture); the
    convolutional branch is a 3-layer FCN pooled over time. Their
    features are concatenated for the linear head.
    """

    def __init__(
        self,
        num_classes,
        input_length,
        lstm_hidden=16,
        conv_channels=(32, 64, 32),
        kernel_sizes=(8, 5, 3),
        lstm_dropout=0.0,
    ):
        super().__init__()
        self.input_length = input_length
        self.lstm = nn.LSTM(
            input_size=input_length, hidden_size=lstm_hidden, batch_first=True
        )
        self.lstm_drop = nn.Dropout(lstm_dropout)
        c1, c2, c3 = conv_channels
        k1, k2, k3 = kernel_sizes
        self.conv1 = ConvBlock(1, c1, k1)
        self.conv2 = ConvBlock(c1, c2, k2)
        self.conv3 = ConvBlock(c2, c3, k3)
        self.feature_dim = lstm_hidden + c3
        self.head = nn.Linear(self.feature_dim, num_classes)
        self.probe_points = OrderedDict(
            [("conv1", self.conv1), ("conv2", self.conv2), ("conv3", self.conv3)]
        )

    def forward_features(self, x):
        # x: (B, 1, L). The LSTM consumes it as one step of L features.
        _, (h_n, _) = self.lstm(x)
        h = self.lstm_drop(h_n[-1])
        c = self.conv3(self.conv2(self.conv1(x))).mean(dim=-1)
        return torch.cat([h, c], dim=1)

    def forward(self, x):
        return self.head(self.forward_features(x))
