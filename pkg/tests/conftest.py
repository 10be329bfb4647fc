from __future__ import annotations

import numpy as np
import pytest

from msk_tap.model import build_layout, sample_disorder
from msk_tap.order_params import critical_temperatures
from msk_tap.presets import preset


def instance(name: str, *, ratio: float = 0.5, h: float = 0.3, n: int = 8, seed: int = 0):
    """Preset at ``beta = ratio * beta_0`` together with its layout and one disorder draw."""
    spec = preset(name, h=h, n=n)
    spec = spec.replace(beta=ratio * critical_temperatures(spec).beta_0)
    layout = build_layout(spec)
    return spec, layout, sample_disorder(spec, layout, seed)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
