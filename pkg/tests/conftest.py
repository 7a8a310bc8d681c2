import numpy as np
import pytest


def cox_de_boor(knots, degree, i, x):
    """Textbook recursion for the i-th B-spline of `degree` (right-closed at the end)."""
    t = knots
    if degree == 0:
        if t[i] <= x < t[i + 1]:
            return 1.0
        # the last non-degenerate interval also owns its right end point
        if x == t[-1] and t[i] < t[i + 1] == t[-1]:
            return 1.0
        return 0.0
    left = 0.0
    if t[i + degree] != t[i]:
        left = (x - t[i]) / (t[i + degree] - t[i]) * cox_de_boor(t, degree - 1, i, x)
    right = 0.0
    if t[i + degree + 1] != t[i + 1]:
        right = ((t[i + degree + 1] - x) / (t[i + degree + 1] - t[i + 1])
                 * cox_de_boor(t, degree - 1, i + 1, x))
    return left + right


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE = []


def record(number, name, ok, detail=""):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
