import numpy as np
import pytest

from scatlab import flow, metrics, sphere_tensors as st


def generic_field(n=3):
    """Round metric plus a polynomial rank-2 term: positive, not Killing."""
    poly = st.polynomial_tensor(n, {(0,) * n: 1.0, (1,) + (0,) * (n - 1): 0.5},
                                [np.array([1.0, 0.3, 0.5][:n]), np.array([0.2, 1.0, 0.4][:n])])
    return st.sum_fields([st.round_metric(n), poly])


def normal_form(m=3, amplitude=0.3, h=None, n=3):
    h = generic_field(n) if h is None else h
    return metrics.normal_form_ae(metrics.PerturbationSpec(m=m, h_m=h, amplitude=amplitude))


def random_cartesian_ae(seed=1, n=3, m=3, scale=0.5):
    rng = np.random.default_rng(seed)
    C = rng.normal(size=(n, n))
    C = 0.5 * (C + C.T) * scale
    L = rng.normal(size=(n, n, n)) * 0.2 * scale / 0.5
    return metrics.cartesian_ae(n, m, C, L)


def incoming(eta, n=3):
    y = np.zeros(n)
    y[-1] = -1.0
    return flow.BoundaryData(y, np.asarray(eta, dtype=float), "-")


@pytest.fixture(scope="session")
def nf3():
    return normal_form()


@pytest.fixture(scope="session")
def cae3():
    return random_cartesian_ae()


# --- acceptance summary ---------------------------------------------------------

_CRITERIA: dict = {}


class CriterionRecorder:
    """Collects sub-check outcomes per acceptance criterion for the terminal summary."""

    def check(self, number: int, label: str, ok: bool, detail: str = "") -> bool:
        _CRITERIA.setdefault(number, []).append((label, bool(ok), detail))
        print(f"criterion {number} [{label}]: {'PASS' if ok else 'FAIL'} {detail}")
        return bool(ok)


@pytest.fixture(scope="session")
def criteria():
    return CriterionRecorder()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        checks = _CRITERIA[number]
        ok = all(c[1] for c in checks)
        failed = [f"{label}: {detail}" for label, good, detail in checks if not good]
        parts = "; ".join(failed) if failed else "; ".join(label for label, _, _ in checks)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  ({parts})")
