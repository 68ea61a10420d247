import numpy as np
import pytest
from hypothesis import strategies as st

from pidsim.dynamics import SystemState
from pidsim.model import build_preset


@st.composite
def jostled_states(draw, preset="eight_g_optimal", jitter=4e-4):
    """Preset packing shaken by up to ``jitter`` metres, so many pairs and walls overlap."""
    cfg = build_preset(preset)
    n = cfg.layout.count
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    base = SystemState.at_rest(cfg)
    pos = base.positions + rng.uniform(-jitter, jitter, size=(n, 2))
    if cfg.layout.mode.value == "one_dimensional":
        pos[:, 1] = 0.0
    state = SystemState(
        time=draw(st.floats(0.0, 2e-3)),
        z=float(rng.uniform(-1e-3, 1e-3)),
        zdot=float(rng.uniform(-0.5, 0.5)),
        positions=pos,
        velocities=rng.uniform(-1.0, 1.0, size=(n, 2)),
        angles=rng.uniform(-np.pi, np.pi, size=n),
        spins=rng.uniform(-50.0, 50.0, size=n),
    )
    return cfg, state


@pytest.fixture(scope="session")
def ps_only_run():
    from pidsim.dynamics import simulate

    cfg = build_preset("ps_only", {"shock.amplitude": 100.0})
    traj, ledger = simulate(cfg)
    return cfg, traj, ledger


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> str:
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
