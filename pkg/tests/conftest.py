import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from twokey.keyderive import MasterKey, Side  # noqa: E402
from twokey.modmath import DEFAULT_PARAMS, NAMED_PARAMS, FieldParams, is_safe_prime  # noqa: E402

DATA = Path(__file__).resolve().parent / "data"
SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

P23 = NAMED_PARAMS["toy-23"]
P47 = NAMED_PARAMS["toy-47"]


def smallest_safe_prime_from(n: int) -> FieldParams:
    n |= 1
    while not is_safe_prime(n):
        n += 2
    return FieldParams.from_prime(n)


# 24-bit field: the smallest size whose blocks carry one payload byte
P24 = smallest_safe_prime_from(1 << 23)


class ScriptedRng:
    """Returns a fixed sequence from randrange; fails loudly when exhausted."""

    def __init__(self, values):
        self.values = list(values)
        self.calls = []

    def randrange(self, lo, hi=None):
        self.calls.append((lo, hi))
        return self.values.pop(0)


@pytest.fixture
def params():
    return DEFAULT_PARAMS


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def mk_x():
    return MasterKey(bytes(range(64)), Side.X)


@pytest.fixture
def mk_y():
    return MasterKey(bytes(range(64, 128)), Side.Y)


def fixture_g(params=DEFAULT_PARAMS, seed=99):
    from twokey.modmath import find_large_order_element
    return find_large_order_element(params, random.Random(seed))


# -- acceptance report ----------------------------------------------------------------
# Tests marked ``criterion(name, title)`` get one PASS/FAIL line in the terminal summary.

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name, title): acceptance criterion check")
    config._criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and call.excinfo is not None:
        detail = call.excinfo.exconly().splitlines()[0][:160]
    item.config._criteria.append((mark.args[0], mark.args[1], rep.passed, detail))


def pytest_terminal_summary(terminalreporter, config):
    if not config._criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, title, ok, detail in sorted(config._criteria, key=lambda r: int(r[0][2:])):
        line = f"{name} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
