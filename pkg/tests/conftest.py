import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ciliate_ctl.core import SwimmerModel, j_metric, random_rotation

settings.register_profile("ci", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


def random_spd(rng, lo=0.3, hi=2.0):
    Q = random_rotation(rng)
    J = Q @ np.diag(rng.uniform(lo, hi, 3)) @ Q.T
    return 0.5 * (J + J.T)


def random_dissipative(rng, m=3, mbar=1.0, eps=0.2):
    J = random_spd(rng)
    G = rng.normal(size=(6, 6))
    A = np.linalg.solve(j_metric(mbar, J), -(G @ G.T) - eps * np.eye(6))
    return SwimmerModel(A, rng.normal(size=(6, m)), J, mbar)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance bookkeeping: one line per criterion part, summarized at the end
_ACCEPTANCE: list = []


@pytest.fixture
def acceptance():
    def record(key: str, ok: bool, detail: str):
        line = f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((key, bool(ok), line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for _, _, line in _ACCEPTANCE:
        tr.write_line(line)
    by = {}
    for key, ok, _ in _ACCEPTANCE:
        n = "".join(ch for ch in key if ch.isdigit())
        by.setdefault(int(n), []).append(ok)
    tr.write_line("")
    for n in sorted(by):
        tr.write_line(f"ACCEPTANCE {n}: {'PASS' if all(by[n]) else 'FAIL'}")
    missing = sorted(set(range(1, 10)) - set(by))
    for n in missing:
        tr.write_line(f"ACCEPTANCE {n}: NOT RUN")
