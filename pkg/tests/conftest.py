import numpy as np
import pytest

from deepcofib import _backend

BACKENDS = _backend.available()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rel_error(analytic, numeric, floor=1e-6):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    return np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), floor
    )


def fd_check(loss_fn, arrays, analytic, rng, coords=100, h=1e-6, floor=1e-6):
    """Central differences of ``loss_fn()`` at random coordinates of ``arrays``.

    ``analytic[i]`` is the claimed gradient for ``arrays[i]``; arrays are
    perturbed in place and restored.  Returns the worst relative error.
    """
    sizes = np.array([a.size for a in arrays])
    picks = rng.choice(sizes.sum(), size=min(coords, sizes.sum()), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat in picks:
        i = int(np.searchsorted(offsets, flat, side="right") - 1)
        j = int(flat - offsets[i])
        view = arrays[i].reshape(-1)
        old = view[j]
        view[j] = old + h
        up = loss_fn()
        view[j] = old - h
        down = loss_fn()
        view[j] = old
        numeric = (up - down) / (2 * h)
        worst = max(worst, float(rel_error(analytic[i].reshape(-1)[j], numeric, floor)))
    return worst


# one line per acceptance criterion, shown after the run even without -s
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
