import warnings

import pytest
from hypothesis import HealthCheck, settings

from tdoracle.flat import preprocess_flat, preprocess_traponly
from tdoracle.instance import GeneratorConfig, generate
from tdoracle.query import stretch_constants
from tdoracle.tuning import estimate_profile, tune_flat, tune_traponly

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

EPS = 0.5
ALPHA = 0.5


def flat_params(inst, prof, eps=EPS, delta=0.6, beta=0.1):
    psi = stretch_constants(eps, prof.zeta, prof.lam_max, 0).psi
    beta = min(beta, ALPHA * (1 + ALPHA) / (2 / prof.nu + ALPHA))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return tune_flat(inst.n, ALPHA, prof.nu, eps, psi, delta, beta, floor_r=True)


def traponly_params(inst, prof, eps=EPS, delta=0.6, beta=0.1):
    psi = stretch_constants(eps, prof.zeta, prof.lam_max, 0).psi
    beta = min(beta, ALPHA * ALPHA * prof.nu)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return tune_traponly(inst.n, ALPHA, prof.nu, eps, psi, delta, beta, floor_r=True)


@pytest.fixture(scope="session")
def inst500():
    return generate(GeneratorConfig(n=500, seed=1))


@pytest.fixture(scope="session")
def prof500(inst500):
    return estimate_profile(inst500, seed=0)


@pytest.fixture(scope="session")
def flat500(inst500, prof500):
    return preprocess_flat(inst500, flat_params(inst500, prof500), prof500, seed=0)


@pytest.fixture(scope="session")
def trap500(inst500, prof500):
    return preprocess_traponly(inst500, traponly_params(inst500, prof500), prof500, seed=0)


@pytest.fixture(scope="session")
def inst120():
    return generate(GeneratorConfig(n=120, seed=5))


@pytest.fixture(scope="session")
def prof120(inst120):
    return estimate_profile(inst120, pairs=64, times=32, seed=0)


# one pass/fail line per acceptance criterion in the terminal summary
_criteria: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        outcome = _criteria[name]
        label = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"{label}  {name}")
