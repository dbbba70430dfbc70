import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance criterion verdict lines into the terminal
    summary so they are visible without -s."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(results):
        terminalreporter.write_line(
            f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
        )
