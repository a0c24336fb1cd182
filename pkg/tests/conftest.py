import os
import sys

from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

import kkt_audit  # noqa: E402

# compiled kernels make the first example slow; no per-example deadline
settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

kkt_audit.install()

# filled by test_acceptance.report()
ACCEPTANCE = {}


def pytest_collection_modifyitems(items):
    # the acceptance gate runs last, and its KKT criterion after everything
    # else, so the audit covers every path computed in the session
    def order(it):
        acceptance = it.module.__name__.endswith("test_acceptance")
        return (acceptance, acceptance and "kkt_contract" in it.name)
    items.sort(key=order)


def pytest_terminal_summary(terminalreporter):
    s = kkt_audit.snapshot()
    tr = terminalreporter
    if s["paths"]:
        tr.section("KKT audit")
        tr.write_line("%d paths, %d converged solutions, max residual %.3g, %d above "
                      "tolerance, %d not converged (deliberate)"
                      % (s["paths"], s["solutions"], s["max_residual"], s["failures"],
                         s["not_converged"]))
    if ACCEPTANCE:
        tr.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            tr.write_line(ACCEPTANCE[k])
