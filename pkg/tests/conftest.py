"""Per-criterion PASS/FAIL summary for the acceptance suite."""

from collections import defaultdict

CRITERIA = {
    1: "renewal bound dominates |u(n) - 1/m| on every fixture and rate",
    2: "stationary delay gives b * u = 1/m",
    3: "coupling exponential moments (Monte Carlo)",
    4: "split chain identities, Kac measure and atom return law",
    5: "taboo probability bound",
    6: "end-to-end V-norm domination on the two-state family",
    7: "OU drift certificate",
    8: "OU empirical domination and Gaussian invariant density",
    9: "bit-for-bit reproducibility of the Monte Carlo statistics",
}

_criterion_of = {}
_outcomes = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _criterion_of[item.nodeid] = mark.args[0]


def pytest_runtest_logreport(report):
    crit = _criterion_of.get(report.nodeid)
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes[crit].append((report.nodeid, report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_outcomes):
        results = _outcomes[crit]
        passed = sum(ok for _, ok in results)
        status = "PASS" if passed == len(results) else "FAIL"
        failed = [nodeid.split("::", 1)[-1] for nodeid, ok in results if not ok]
        detail = f"; failed: {', '.join(failed)}" if failed else ""
        tr.write_line(f"criterion {crit}: {status} ({passed}/{len(results)} tests) {CRITERIA.get(crit, '')}{detail}")
