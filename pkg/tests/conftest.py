import os
from pathlib import Path

import numpy as np
import pytest

from vqopt.experiments import bundled_config_dir

FULL = os.environ.get("VQOPT_FULL") == "1"
full_only = pytest.mark.skipif(not FULL, reason="full-scale run; set VQOPT_FULL=1")

I2 = np.eye(2, dtype=complex)
PAULI = {
    "I": I2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}


def kron_string(letters: str) -> np.ndarray:
    """Reference Pauli-string matrix, qubit 0 leftmost."""
    m = np.ones((1, 1), dtype=complex)
    for ch in letters:
        m = np.kron(m, PAULI[ch])
    return m


def kron_observable(obs) -> np.ndarray:
    return sum(c * kron_string(p.letters) for c, p in obs.terms)


def config_path(name: str) -> Path:
    return bundled_config_dir() / f"{name}.toml"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, collected from tests marked criterion(n)
_CRITERIA: dict[int, list[tuple[str, str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA.setdefault(marker.args[0], []).append((item.name, rep.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        runs = _CRITERIA[n]
        ran = [r for r in runs if r[1] != "skipped"]
        status = "FAIL" if any(r[1] == "failed" for r in ran) else ("PASS" if ran else "SKIP")
        details = " | ".join(f"{name}: {d}" if d else name for name, outcome, d in ran) or "not run"
        skipped = [r[0] for r in runs if r[1] == "skipped"]
        extra = f" (skipped: {', '.join(skipped)})" if skipped else ""
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {details}{extra}")
