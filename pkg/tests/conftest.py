import numpy as np
import pytest

from denograd.backbone import BackboneConfig, BackboneModel


def fixed_linear(weight, bias=None):
    """Single-layer model with given weights, marked trained."""
    w = np.atleast_2d(np.asarray(weight, dtype=float))
    model = BackboneModel(w.shape[0], w.shape[1], BackboneConfig(hidden_layer_sizes=[]))
    model.weights = [w]
    model.biases = [np.zeros(w.shape[1]) if bias is None else np.asarray(bias, dtype=float)]
    model.trained = True
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria register their verdicts here; printed at the end of the session
ACCEPTANCE = {}


def record_criterion(number, title, passed, detail):
    ACCEPTANCE[number] = (title, bool(passed), detail)
    print(f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
