import sys


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        ok, detail = results[num]
        terminalreporter.write_line(mod.line(num, ok, detail))
