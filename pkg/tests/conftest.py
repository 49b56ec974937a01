import math

import numpy as np
import pytest
from hypothesis import settings

from qclmi import _fallback, flows, liouville
from qclmi.core import DensitySpec, ModelSpec, SubsystemState, build_time_grid, validate

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

try:
    from qclmi import _kernels
except ImportError:  # pragma: no cover - extension not built
    _kernels = None

BACKENDS = ["python"] + (["cython"] if _kernels is not None else [])

NELSON = ModelSpec("nelson", math.sqrt(0.1), math.sqrt(2.0), 0.0, 0.05)


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per kernel backend by swapping the module used by flows/liouville."""
    mod = _fallback if request.param == "python" else _kernels
    monkeypatch.setattr(flows, "kernels", mod)
    monkeypatch.setattr(liouville, "kernels", mod)
    return request.param


@pytest.fixture
def nelson():
    return NELSON


def make_config(kind="bilinear", lam=0.9, hbar=1.0, states=("gaussian", "gaussian"), centers=(0, 0, 0, 0),
                omega=(1.0, 1.0), tmax=1.0, steps=4, **numerics):
    from qclmi.core import Numerics

    model = ModelSpec(kind, omega[0], omega[1], lam, hbar)
    density = DensitySpec(
        SubsystemState(states[0], centers[0], centers[1]), SubsystemState(states[1], centers[2], centers[3])
    )
    return validate(model, density, build_time_grid(tmax, steps), Numerics(**numerics))


def rk4_oracle(model, x0, t, dt=1e-5):
    """Independent fixed-step RK4 written directly from Hamilton's equations."""
    w1, w2, cq, cp, cn = flows.hamiltonian_coefficients(model)

    def f(x):
        q1, p1, q2, p2 = x
        return np.array([
            p1 + cp * p2 - cn * q1 * p2,
            -(w1 * q1 + cq * q2 + cn * (q1 * q2 * q2 - p1 * p2)),
            p2 + cp * p1 - cn * q1 * p1,
            -(w2 * q2 + cq * q1 + cn * q1 * q1 * q2),
        ])

    n = int(round(abs(t) / dt))
    h = t / n
    x = np.array(x0, dtype=float)
    for _ in range(n):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


ACCEPTANCE_LINES: list[str] = []


def report(number, ok: bool, detail: str) -> None:
    """Print and remember one acceptance verdict line."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
