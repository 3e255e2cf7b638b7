import numpy as np
import pytest

from scfrec.dataset import InteractionMatrix


def random_interactions(rng, n_users, n_items, density=0.2, ensure_degree=False):
    """Random binary interactions; with ``ensure_degree`` every vertex has a record."""
    mask = rng.random((n_users, n_items)) < density
    if ensure_degree:
        mask[np.arange(n_users), rng.integers(n_items, size=n_users)] = True
        mask[rng.integers(n_users, size=n_items), np.arange(n_items)] = True
    users, items = np.nonzero(mask)
    return InteractionMatrix(
        users,
        items,
        tuple(f"u{k}" for k in range(n_users)),
        tuple(f"i{k}" for k in range(n_items)),
    )


def from_pairs(pairs, n_users=None, n_items=None):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    n_users = n_users if n_users is not None else int(pairs[:, 0].max()) + 1
    n_items = n_items if n_items is not None else int(pairs[:, 1].max()) + 1
    return InteractionMatrix(
        pairs[:, 0],
        pairs[:, 1],
        tuple(f"u{k}" for k in range(n_users)),
        tuple(f"i{k}" for k in range(n_items)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record a one-line PASS/FAIL verdict for an acceptance criterion."""

    def record(label, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
