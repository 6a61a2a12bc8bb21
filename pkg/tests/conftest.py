import pytest
from hypothesis import HealthCheck, settings

from interactsim.config import SimulationConfig
from interactsim.domain import HistoricalInteraction, ItemRecord
from interactsim.ingestion import Dataset
from interactsim.llm import Gateway, MockBackend
from interactsim.profiling import assemble_profile_pool
from interactsim.recommenders import train_recommender
from interactsim.synthetic import generate_synthetic_dataset


settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def no_sleep(_):
    return None


@pytest.fixture
def mock_gateway():
    def make(script, default=None, **kw):
        return Gateway(MockBackend(script, default), sleep=no_sleep, **kw)

    return make


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic_dataset(60, 30, mean_history=10, seed=3)


@pytest.fixture(scope="session")
def small_pool(small_dataset):
    return assemble_profile_pool(small_dataset)


@pytest.fixture(scope="session")
def popular_model(small_dataset):
    return train_recommender("most_popular", small_dataset.interactions(), item_ids=sorted(small_dataset.catalog))


@pytest.fixture
def small_config():
    return SimulationConfig(total_steps=3, agent_count=12, page_size=8, recommender="most_popular", seed=5)


@pytest.fixture
def tiny_catalog():
    return {
        "a": ItemRecord("a", "Alpha Diner", ["Restaurants", "American"]),
        "b": ItemRecord("b", "Beta Sushi", ["Restaurants", "Japanese"]),
        "c": ItemRecord("c", "Gamma Tacos", ["Restaurants", "Mexican"]),
    }


@pytest.fixture
def tiny_dataset(tiny_catalog):
    users = {
        "u1": [HistoricalInteraction("a", 5, "great burgers"), HistoricalInteraction("b", 4)],
        "u2": [HistoricalInteraction("b", 2, "bland fish"), HistoricalInteraction("c", 5, "tasty tacos")],
        "u3": [HistoricalInteraction("a", 3), HistoricalInteraction("c", 4, "good salsa")],
    }
    return Dataset(users, tiny_catalog)


# --- acceptance summary: one pass/fail line per criterion ---------------------

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    if report.when == "setup" and report.passed:
        return
    status = "PASS" if report.passed else "FAIL"
    if number in _ACCEPTANCE and _ACCEPTANCE[number][1] == "FAIL":
        return
    _ACCEPTANCE[number] = (title, status)
    print(f"\nACCEPTANCE {number:2d} {status}: {title}")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{number:2d} {status}  {title}")
