import pytest

from nashvar.market import MarketParams


@pytest.fixture(scope="session")
def market():
    return MarketParams.one_stock(0.03, 0.2, 4.0)


@pytest.fixture(scope="session")
def law(market):
    return market.law()


_CRITERIA: dict[int, str] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    num = int(name.split("_")[2])
    if report.when == "call" or (report.when == "setup" and report.failed):
        _CRITERIA[num] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        terminalreporter.write_line(f"criterion {num}: {_CRITERIA[num]}")
