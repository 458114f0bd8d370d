import pytest

# criterion number -> (passed, description); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {text}")


@pytest.fixture(scope="session")
def bp_tm():
    from neuraltm.machine import balanced_parens
    return balanced_parens()


@pytest.fixture(scope="session")
def bp_stack():
    from neuraltm.machine import balanced_parens_stack
    return balanced_parens_stack()


@pytest.fixture(scope="session")
def bp_wcm(bp_tm):
    from neuraltm import wcm
    return wcm.compile(bp_tm, 100)


@pytest.fixture(scope="session")
def bp_ss4(bp_stack):
    from neuraltm import ss
    return ss.compile4(bp_stack)


@pytest.fixture(scope="session")
def bp_ss1(bp_stack):
    from neuraltm import ss
    return ss.compile1(bp_stack)
