import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from heatcast.timeseries import LoadSeries

settings.register_profile("heatcast", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("heatcast")

# acceptance results, filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def hourly_series(start="2018-01-01T00", days=10, load=None, temperature=None, meter_id="m"):
    ts = np.arange(np.datetime64(start, "h"), np.datetime64(start, "h") + np.timedelta64(24 * days, "h"))
    n = ts.size
    load = np.full(n, 100.0) if load is None else np.broadcast_to(np.asarray(load, float), (n,))
    temperature = np.full(n, 5.0) if temperature is None else np.broadcast_to(np.asarray(temperature, float), (n,))
    return LoadSeries(ts, load, temperature, meter_id)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[1])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key}: {'PASS' if ok else 'FAIL'}  {detail}")
