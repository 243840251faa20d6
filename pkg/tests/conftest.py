import hypothesis
import numpy as np
import pytest

from vmsuite.blocks import init_block, named_arrays, with_arrays
from vmsuite.numeric import make_rng

np.seterr(all="raise", under="ignore")

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture
def rng():
    return make_rng(1234)


def random_block(kind, seed, d_model=4, expand=2, d_state=3):
    """A block whose every tensor is random (step sizes of order one)."""
    rng = make_rng(seed)
    p = init_block(kind, d_model, expand, d_state, seed=seed)
    arrays = {}
    for k, v in named_arrays(p).items():
        if k.endswith("a_log"):
            arrays[k] = rng.uniform(-1.0, 1.0, v.shape)
        elif k.endswith("dt_bias"):
            arrays[k] = rng.normal(0.0, 1.0, v.shape)
        else:
            arrays[k] = rng.normal(0.0, 0.5, v.shape)
    return with_arrays(p, arrays), rng


# --------------------------------------------------------------------------
# One summary line per acceptance criterion

_criteria: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "passed": True, "seen": False})
    if rep.when == "call" or rep.failed:
        entry["seen"] = True
        if rep.failed:
            entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["passed"] and e["seen"] else ("FAIL" if e["seen"] else "NOT RUN")
        terminalreporter.write_line(f"criterion {number:>2}  {status:<7} {e['title']}")
