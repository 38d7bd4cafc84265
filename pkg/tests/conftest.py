"""Shared fixtures: synthetic data generators and the acceptance summary."""

import re

import numpy as np
import pytest

from vinerisk.distributions import SkewedStudentT


def simulate_arma_garch(T, phi0, phi1, theta1, a0, a1, b1, seed, burn=500,
                        innovations=None):
    """Simulate an ARMA(1,1)-GARCH(1,1) path, discarding a burn-in."""
    g = np.random.default_rng(seed)
    if innovations is None:
        z = g.normal(size=T + burn)
    else:
        z = innovations.quantile(g.uniform(1e-12, 1 - 1e-12, size=T + burn))
    r = np.zeros(T + burn)
    eps = np.zeros(T + burn)
    s2 = np.zeros(T + burn)
    s2[0] = a0 / (1.0 - a1 - b1)
    eps[0] = np.sqrt(s2[0]) * z[0]
    r[0] = phi0 + eps[0]
    for t in range(1, T + burn):
        s2[t] = a0 + a1 * eps[t - 1] ** 2 + b1 * s2[t - 1]
        eps[t] = np.sqrt(s2[t]) * z[t]
        r[t] = phi0 + phi1 * r[t - 1] + theta1 * eps[t - 1] + eps[t]
    return r[burn:]


def simulate_skewt_garch(T, nu, xi, seed, phi1=0.3, a0=0.05, a1=0.1, b1=0.8):
    return simulate_arma_garch(T, 0.0, phi1, 0.0, a0, a1, b1, seed,
                               innovations=SkewedStudentT(nu, xi))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def write_panel(path, names, values, start="2021-01-04"):
    """Write a CSV panel with ISO business dates starting at `start`."""
    import datetime

    day = datetime.date.fromisoformat(start)
    dates = []
    while len(dates) < values.shape[0]:
        if day.weekday() < 5:
            dates.append(day.isoformat())
        day += datetime.timedelta(days=1)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("date," + ",".join(names) + "\n")
        for t in range(values.shape[0]):
            cells = ",".join(repr(float(x)) for x in values[t])
            fh.write(f"{dates[t]},{cells}\n")
    return dates


_CRITERION = re.compile(r"test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = {}
    for outcome in ("passed", "failed", "skipped", "error"):
        for report in terminalreporter.stats.get(outcome, ()):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            m = _CRITERION.search(nodeid)
            if not m:
                continue
            num = int(m.group(1))
            name = nodeid.split("::")[-1]
            lines.setdefault(num, []).append((name, outcome.upper()))
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(lines):
        for name, outcome in lines[num]:
            terminalreporter.write_line(f"criterion {num:2d}: {outcome:7s} {name}")
