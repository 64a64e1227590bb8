import time

import pytest

from firerisk.ensemble import EnsembleConfig, META_TRAINING, train_ensemble
from firerisk.vision import DETECTOR_TRAINING
from firerisk.weather import FORECASTER_TRAINING
from firerisk.world import WorldConfig, generate_world

SMALL_WORLD = WorldConfig(rows=16, cols=16, regions=4, timesteps=80, seed=3)
# enough epochs for every stage to run, few enough to keep unit tests quick
SMALL_ENSEMBLE = EnsembleConfig(
    seed=3,
    forecaster=FORECASTER_TRAINING.with_(epochs=15),
    detector=DETECTOR_TRAINING.with_(epochs=4),
    meta=META_TRAINING.with_(epochs=4),
)


@pytest.fixture(scope="session")
def world42():
    return generate_world(WorldConfig(seed=42))


TIMINGS = {}


@pytest.fixture(scope="session")
def trained42(world42):
    """Seed-42 ensemble at the default stage settings: (bundle, histories)."""
    start = time.perf_counter()
    out = train_ensemble(world42, EnsembleConfig(seed=42))
    TIMINGS["train42"] = time.perf_counter() - start
    return out


@pytest.fixture(scope="session")
def small_world():
    return generate_world(SMALL_WORLD)


@pytest.fixture(scope="session")
def small_trained(small_world):
    return train_ensemble(small_world, SMALL_ENSEMBLE)


# one summary line per acceptance criterion, printed at the end of the run
CRITERIA = {}
N_CRITERIA = 8


@pytest.fixture
def criterion():
    def record(number, ok, detail):
        CRITERIA[number] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        ok, detail = CRITERIA.get(n, (False, "not run or did not finish"))
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
