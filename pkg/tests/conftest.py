import pytest

from benchnoc.bench import device_graph
from benchnoc.engine import calibrated_config
from benchnoc.topology import DeviceSpec, build_device, default_rows, vp1802_spec


@pytest.fixture(scope="session")
def cfg():
    return calibrated_config()


@pytest.fixture(scope="session")
def graph(cfg):
    """Calibrated VP1802 graph."""
    return device_graph(vp1802_spec(), cfg)


@pytest.fixture(scope="session")
def small_graph():
    """Two SLRs, two columns, three taps each: cheap enough for property tests."""
    spec = DeviceSpec(name="small", slr_count=2, vnoc_columns=2, nmu_per_column_bottom_slr=3,
                      nmu_per_column_other_slr=3, hnoc_rows=default_rows(2))
    return build_device(spec)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def add(criterion: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}")
        return ok

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
