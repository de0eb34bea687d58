"""Shared pytest hooks.

Acceptance tests register one verdict per criterion; the verdicts are printed
as a block at the end of the session, one line each.
"""
from hypothesis import settings

settings.register_profile("ci", deadline=None)
settings.load_profile("ci")

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
