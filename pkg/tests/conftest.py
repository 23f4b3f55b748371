import sys
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

ETT_COLUMNS = ["HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"]


def make_etth1_like(path, n_rows=2000, seed=20160701):
    """Bundled same-schema stand-in for the first rows of ETTh1: hourly
    timestamps, six load columns plus the oil-temperature target, daily and
    weekly seasonality, AR noise, and OT lag-coupled to the loads."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_rows)
    values = np.zeros((n_rows, 7))
    for j in range(6):
        daily = np.sin(2 * np.pi * (t / 24.0 + rng.uniform()))
        weekly = 0.5 * np.sin(2 * np.pi * (t / 168.0 + rng.uniform()))
        ar = np.zeros(n_rows)
        shocks = 0.3 * rng.normal(size=n_rows)
        for i in range(1, n_rows):
            ar[i] = 0.8 * ar[i - 1] + shocks[i]
        values[:, j] = (2 + j) * 0.8 * daily + weekly + ar + rng.uniform(-1, 1)
    ot = np.zeros(n_rows)
    for i in range(1, n_rows):
        ot[i] = 0.9 * ot[i - 1] + 0.1 * values[i - 1, 0] + 0.05 * values[i - 1, 2] \
            + 0.1 * rng.normal()
    values[:, 6] = 25.0 + 5.0 * ot
    start = datetime(2016, 7, 1, 0, 0, 0)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date," + ",".join(ETT_COLUMNS) + "\n")
        for i in range(n_rows):
            stamp = (start + timedelta(hours=i)).strftime("%Y-%m-%d %H:%M:%S")
            fh.write(stamp + "," + ",".join(f"{v:.6f}" for v in values[i]) + "\n")
    return path


@pytest.fixture(scope="session")
def etth1_fixture(tmp_path_factory):
    path = tmp_path_factory.mktemp("etth1") / "etth1_fixture.csv"
    return make_etth1_like(path)
