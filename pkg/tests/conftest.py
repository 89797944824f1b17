import warnings

import pytest
from hypothesis import HealthCheck, settings

from whitney_w2p import build_domain, bump_spec, cusp_spec, decompose, flat_spec
from whitney_w2p.fdsolver import DegenerateArm, build_grid

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow,
                                                 HealthCheck.function_scoped_fixture])
settings.load_profile("default")

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.fixture(scope="session")
def criterion():
    """record(n, ok, detail): one PASS/FAIL line per acceptance criterion."""
    def record(n: int, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        _CRITERIA[n] = ("PASS" if ok else "FAIL", line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n][1])


@pytest.fixture(scope="session")
def flat():
    return build_domain(flat_spec())


@pytest.fixture(scope="session")
def bump():
    return build_domain(bump_spec())


@pytest.fixture(scope="session")
def cusp():
    cache = {}

    def get(alpha: float):
        if alpha not in cache:
            cache[alpha] = build_domain(cusp_spec(alpha))
        return cache[alpha]
    return get


@pytest.fixture(scope="session")
def flat_dec(flat):
    return decompose(flat, 8)


@pytest.fixture(scope="session")
def cusp_dec(cusp):
    return decompose(cusp(0.6), 8)


@pytest.fixture(scope="session")
def grid_of():
    """Cached build_grid with the snapped-node warning silenced."""
    cache = {}

    def get(dom, h):
        key = (id(dom), h)
        if key not in cache:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateArm)
                cache[key] = build_grid(dom, h)
        return cache[key]
    return get
