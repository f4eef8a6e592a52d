import numpy as np
import pytest

from gwtpp.core import Dataset, EventSequence
from gwtpp.simulate import default_plan, make_synthetic


def random_sequence(rng, num_types, horizon, n, seq_id="s", label=None):
    times = np.sort(rng.uniform(0, horizon, size=n))
    types = rng.integers(num_types, size=n)
    return EventSequence.from_arrays(seq_id, times, types, horizon, label)


def random_dataset(seed, M=6, num_types=3, horizon=10.0, n_range=(1, 12)):
    rng = np.random.default_rng(seed)
    seqs = [random_sequence(rng, num_types, horizon, int(rng.integers(*n_range)), f"r{i}", i % 2)
            for i in range(M)]
    return Dataset(tuple(seqs), num_types, horizon)


@pytest.fixture(scope="session")
def small_two_cluster():
    return make_synthetic(default_plan(("Hawkes", "InhomPoisson"), 20, seed=11))


def central_differences(f, x, h=1e-5):
    g = np.empty_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def max_relative_error(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)))


ACCEPTANCE_LINES = []


def record_criterion(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
