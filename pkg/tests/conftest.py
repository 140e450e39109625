import pytest

# criterion id -> list of (passed, detail), filled by the acceptance tests
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(cid, passed, detail=""):
        ACCEPTANCE.setdefault(cid, []).append((bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: (len(c), c)):
        rows = ACCEPTANCE[cid]
        ok = all(p for p, _ in rows)
        detail = "; ".join(d for _, d in rows if d)
        tr.write_line(f"{cid} {'PASS' if ok else 'FAIL'}  {detail}")
