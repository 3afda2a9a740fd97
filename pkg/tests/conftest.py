import numpy as np
import pytest

from l3sysid.lifting import Dataset, Trajectory
from l3sysid.plant import ToyPlant, generate_dataset


def stable_matrix(rng, size, radius=0.9):
    M = rng.normal(size=(size, size))
    return radius * M / np.max(np.abs(np.linalg.eigvals(M)))


def linear_system_dataset(seed=0, l=2, z=1, n=1, count=6, T=40):
    """Noiseless data from (x, zeta)_{t+1} = A0 (x, zeta, u)_t."""
    rng = np.random.default_rng(seed)
    k = l + z
    A0 = np.hstack([stable_matrix(rng, k), rng.normal(size=(k, n))])
    trajs = []
    for _ in range(count):
        s = np.empty((T, k))
        u = rng.uniform(-1, 1, size=(T, n))
        s[0] = rng.normal(size=k)
        for t in range(T - 1):
            s[t + 1] = A0 @ np.concatenate([s[t], u[t]])
        trajs.append(Trajectory(0.1, s[:, :l], u, s[:, l:]))
    split = ("train",) * (count - 2) + ("validation",) * 2
    return Dataset(tuple(trajs), split), A0


@pytest.fixture(scope="session")
def toy_dataset():
    return generate_dataset(ToyPlant(), count=20, seed=3)


ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
