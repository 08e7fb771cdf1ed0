from collections import defaultdict

import pytest

TITLES = {
    1: "exact radial solution by shooting",
    2: "2D Newton convergence and refinement order",
    3: "Gauss-Bonnet terms of the exact solution",
    4: "radial bubble closed forms",
    5: "bubble energy scan",
    6: "perturbed family consistency",
    7: "second variation and Morse index",
    8: "nonexistence at critical deficit",
    9: "existence pipeline (continuation and mountain pass)",
    10: "Lebedev-Milin gap",
    11: "Liouville residual and circle curvature",
    12: "blow-up candidate classification",
}

_outcomes = defaultdict(list)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if hasattr(rep, "wasxfail"):
            kind = "xpass" if rep.passed else "xfail"
        else:
            kind = rep.outcome
        _outcomes[marker.args[0]].append((item.name, kind, getattr(rep, "wasxfail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(TITLES):
        results = _outcomes.get(n)
        if not results:
            continue
        kinds = [k for _, k, _ in results]
        stated = [reason for _, k, reason in results if k == "xfail"]
        ok = all(k in ("passed", "xfail") for k in kinds)
        if not ok:
            status = "FAIL"
        elif stated:
            status = "FAIL as stated, corrected checks PASS"
        else:
            status = "PASS"
        tr.write_line(f"criterion {n:2d}: {status}  ({TITLES[n]}, {len(results)} checks)")
        for reason in stated:
            tr.write_line(f"               stated value not reproduced: {reason}")
