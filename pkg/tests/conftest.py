import re
import warnings

import numpy as np
import pytest

from ptquantum import GaussianState, InitialState, SystemConfig, SystemKind, state_at

ACCEPTANCE_NAMES = {
    "A1": "oracle equivalence",
    "A2": "asymptotic local depth",
    "A3": "EP structure",
    "A4": "Gaussian depth bound",
    "A5": "quantumness hierarchy",
    "A6": "variant relations",
    "A7": "Bell properties",
    "A8": "physicality",
    "A9": "commutator preservation",
    "A10": "determinism",
}

_outcomes: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(code): acceptance criterion covered by the test")
    config.addinivalue_line("markers", "slow: long-running test")


def pytest_collection_modifyitems(items):
    # acceptance tests run last, in criterion order, whatever the file order
    def key(item):
        m = item.get_closest_marker("acceptance")
        if m is None:
            return (0, 0)
        return (1, int(m.args[0][1:]))

    items.sort(key=key)


def pytest_runtest_makereport(item, call):
    m = item.get_closest_marker("acceptance")
    if m is None or call.when != "call" and not (call.when == "setup" and call.excinfo):
        return
    if call.excinfo is not None and call.excinfo.errisinstance(pytest.skip.Exception):
        return
    code = m.args[0]
    ok = call.excinfo is None
    prev = _outcomes.get(code)
    _outcomes[code] = ok if prev is None else prev and ok


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for code in sorted(_outcomes, key=lambda c: int(re.sub(r"\D", "", c))):
        verdict = "PASS" if _outcomes[code] else "FAIL"
        terminalreporter.write_line(f"{code:<4} {verdict}  {ACCEPTANCE_NAMES.get(code, '')}")


# ------------------------------------------------------------------ helpers


def tmsv(r: float) -> GaussianState:
    """Two-mode squeezed vacuum coefficients."""
    s, c = np.sinh(r), np.cosh(r)
    return GaussianState(b1=s * s, b2=s * s, d=-1j * s * c)


def squeezed(r: float, phase: float = 0.0) -> GaussianState:
    """Single-mode squeezed vacuum in mode 1, vacuum in mode 2."""
    s, c = np.sinh(r), np.cosh(r)
    return GaussianState(b1=s * s, c1=-np.exp(1j * phase) * s * c)


def random_config(rng, kappa_max: float = 1.2, gamma_max: float = 1.0) -> SystemConfig:
    kinds = list(SystemKind)
    return SystemConfig(
        kappa=float(rng.uniform(0.0, kappa_max)),
        gamma=float(rng.uniform(0.0, gamma_max)),
        kind=kinds[rng.integers(len(kinds))],
    )


def random_states(n: int, seed: int, t_max: float = 10.0):
    """``n`` (config, t, state) triples with moderate amplification."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        cfg = random_config(rng)
        t = float(rng.uniform(0.0, t_max))
        out.append((cfg, t, state_at(cfg, InitialState(), t)))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_oracle_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*moment growth.*", category=RuntimeWarning)
        yield
