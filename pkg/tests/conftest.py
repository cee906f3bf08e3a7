import numpy as np
import pytest

from wate.data import Dataset


def small_dataset(seed: int, n: int = 60, p: int = 2, het: bool = True) -> Dataset:
    """Two-covariate confounded sample with moderate overlap."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    e = 1.0 / (1.0 + np.exp(-(0.2 + 0.6 * x[:, 0] - 0.4 * x[:, 1])))
    z = (rng.random(n) < e).astype(float)
    if z.sum() < 6:
        z[:6] = 1.0
    if z.sum() > n - 6:
        z[-6:] = 0.0
    effect = 1.0 + (0.8 * x[:, 0] if het else 0.0)
    y = 0.5 + x @ np.linspace(1.0, -0.5, p) + z * effect + rng.normal(size=n)
    return Dataset(z, y, x, tuple(f"x{i + 1}" for i in range(p)))


@pytest.fixture
def ds60():
    return small_dataset(11)


ACCEPTANCE = []


def report(number: int, ok: bool, detail: str) -> None:
    """Record one acceptance verdict; the lines are echoed in the terminal summary."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
