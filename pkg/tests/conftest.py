import numpy as np
import pytest

from isnmf import _pykernels, kernels

try:
    from isnmf import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["c"] = _ckernels


@pytest.fixture(params=sorted(BACKENDS))
def backend(request, monkeypatch):
    """Run the test once per available kernel backend."""
    monkeypatch.setattr(kernels, "impl", BACKENDS[request.param])
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_problem(rng, F, K, N, noise=0.05):
    w = rng.random((F, K)) + 0.05
    w /= w.sum(axis=0)
    h = rng.gamma(1.0, 1.0, (K, N)) + 0.01
    v = (w @ h) * np.exp(noise * rng.standard_normal((F, N)))
    return np.asfortranarray(v), np.asfortranarray(w), np.asfortranarray(h)


# -- acceptance summary ---------------------------------------------------------
# Each acceptance test is named ``test_criterion_NN_...`` and may record its
# measured numbers with ``record_detail``; the summary prints one line per
# criterion with the pytest outcome.

ACCEPTANCE_DETAILS = {}
_ACCEPTANCE_OUTCOMES = {}


def record_detail(number, text):
    ACCEPTANCE_DETAILS[number] = text


def _criterion_number(nodeid):
    name = nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return None
    return int(name.split("_")[2])


def pytest_runtest_logreport(report):
    n = _criterion_number(report.nodeid)
    if n is None:
        return
    if report.when == "call" or report.failed:
        _ACCEPTANCE_OUTCOMES[n] = "PASS" if report.passed and _ACCEPTANCE_OUTCOMES.get(n) != "FAIL" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE_OUTCOMES):
        detail = ACCEPTANCE_DETAILS.get(n, "")
        terminalreporter.write_line(f"criterion {n:2d}: {_ACCEPTANCE_OUTCOMES[n]}  {detail}".rstrip())
