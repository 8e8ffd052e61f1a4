"""Shared pytest configuration: the acceptance-criteria summary block.

The acceptance tests register one entry per criterion as they run; after the
session this hook prints a compact pass/fail table so the verdicts are
readable without scrolling through individual test output.
"""

#: criterion number -> (passed, one-line detail); filled by test_acceptance.
ACCEPTANCE_RESULTS = {}

CRITERION_TITLES = {
    1: "separation moments, weighted-Gaussian member",
    2: "normalized-overlap member integrates to one",
    3: "analytic gradients vs central differences",
    4: "density-diffusion coefficient bounds",
    5: "angular moment parity",
    6: "concentration map plug-back consistency",
    7: "orientation tensors vs direct sphere integrals",
    8: "orientation-response solver checks",
    9: "cell-list vs brute-force drifts",
    10: "reduced-scale alignment run",
    11: "coupling-ratio contrast sweep",
    12: "potential-family comparison",
    13: "isotropic null keeps directions frozen",
    14: "unit-norm and net-drift invariants",
}


def record_criterion(number, passed, detail):
    """Store one acceptance verdict for the end-of-session table."""
    ACCEPTANCE_RESULTS[int(number)] = (bool(passed), str(detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERION_TITLES):
        title = CRITERION_TITLES[number]
        if number in ACCEPTANCE_RESULTS:
            passed, detail = ACCEPTANCE_RESULTS[number]
            status = "PASS" if passed else "FAIL"
            terminalreporter.write_line(f"[{status}] {number:2d} {title}: {detail}")
        else:
            terminalreporter.write_line(f"[ -- ] {number:2d} {title}: not evaluated in this run")
