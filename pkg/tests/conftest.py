import numpy as np
import pytest
import torch
import torch.nn as nn

torch.set_num_threads(1)

from tstrojan.data import LabeledSeries, SeriesDataset, znormalize
from tstrojan.models import ModelHandle

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def normalized(d: SeriesDataset) -> SeriesDataset:
    return SeriesDataset(
        samples=[znormalize(s) for s in d.samples],
        num_classes=d.num_classes,
        series_length=d.series_length,
        name=d.name,
    )


def make_dataset(n, length, num_classes=2, seed=0, name="toy"):
    """Small labeled dataset with class-dependent frequency content."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, length)
    samples = []
    for i in range(n):
        label = i % num_classes
        values = np.sin(2.0 * np.pi * (2 + 2 * label) * t + rng.uniform(0, 6.28))
        values = values + 0.2 * rng.standard_normal(length)
        samples.append(LabeledSeries(values=values, label=label))
    return normalized(
        SeriesDataset(samples=samples, num_classes=num_classes,
                      series_length=length, name=name)
    )


class LinearNet(nn.Module):
    """Flatten + single linear map; closed-form gradients for oracles."""

    def __init__(self, length, num_classes, seed=0, dtype=torch.float64):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        w = torch.randn(num_classes, length, generator=gen, dtype=dtype)
        self.weight = nn.Parameter(w)

    def forward(self, x):
        return x.reshape(x.shape[0], -1) @ self.weight.T


class ConstantNet(nn.Module):
    """Ignores the input; always emits the same logits."""

    def __init__(self, logits):
        super().__init__()
        self.register_buffer("logits", torch.as_tensor(logits, dtype=torch.float32))
        self._anchor = nn.Parameter(torch.zeros(1))

    def forward(self, x):
        return self.logits.repeat(x.shape[0], 1) + 0.0 * self._anchor


class MeanNet(nn.Module):
    """Logits (mean(x), -mean(x)): a perfect model for sign-of-mean labels."""

    def __init__(self):
        super().__init__()
        self._anchor = nn.Parameter(torch.zeros(1))

    def forward(self, x):
        m = x.mean(dim=(1, 2))
        return torch.stack([m, -m], dim=1) + 0.0 * self._anchor


def wrap(net, num_classes, input_length, architecture="custom"):
    return ModelHandle(net, architecture=architecture, num_classes=num_classes,
                       input_length=input_length)


@pytest.fixture(scope="session")
def tiny_train():
    return make_dataset(12, 64, seed=1, name="tiny-train")


@pytest.fixture(scope="session")
def tiny_test():
    return make_dataset(10, 64, seed=2, name="tiny-test")


@pytest.fixture(scope="session")
def tiny_ext():
    rng = np.random.default_rng(3)
    samples = [
        LabeledSeries(values=np.cumsum(rng.standard_normal(32)), label=i % 2)
        for i in range(6)
    ]
    return normalized(
        SeriesDataset(samples=samples, num_classes=2, series_length=32, name="tiny-ext")
    )
