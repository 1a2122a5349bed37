import os

import pytest
import torch
from hypothesis import HealthCheck, settings

from zonocert.domains import DTYPE, InterZono, NoisePool, Zonotope

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def rand_zono(gen, n, N, batch=(), scale=1.0, center_scale=1.0):
    c = torch.randn(*batch, n, generator=gen, dtype=DTYPE) * center_scale
    g = torch.randn(*batch, N, n, generator=gen, dtype=DTYPE) * scale / max(N, 1) ** 0.5
    return Zonotope(c, g)


def sample_eps(gen, S, N, batch=()):
    return torch.rand(S, *batch, N, generator=gen, dtype=DTYPE) * 2 - 1


def sample_interzono(d: InterZono, gen, S=10_000):
    """Points of the main zonotope that also lie in the support box (the represented set)."""
    eps = sample_eps(gen, S, d.main.noise_count, tuple(d.batch_shape))
    pts = d.main.sample(eps)
    b = d.support.bounds
    keep = ((pts >= b.lower - 1e-12) & (pts <= b.upper + 1e-12)).all(dim=-1)
    return pts[keep], eps[keep]


@pytest.fixture
def gen():
    return torch.Generator().manual_seed(1234)


# --- acceptance reporting ---------------------------------------------------------

ACCEPTANCE = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> str:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 11):
        terminalreporter.write_line(ACCEPTANCE.get(k, f"criterion {k:2d} NOT RUN"))
