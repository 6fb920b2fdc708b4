import os
from pathlib import Path

import pytest

from eened.data import write_synthetic_public_csv

REAL_CSV_CANDIDATES = [
    "data/seizures.csv",
    "data/Epileptic Seizure Recognition.csv",
    "seizures.csv",
]


def find_real_csv():
    """The real recording CSV, if the environment provides one."""
    env = os.environ.get("EENED_DATA")
    if env and Path(env).is_file():
        return Path(env)
    root = Path(__file__).resolve().parent.parent
    for rel in REAL_CSV_CANDIDATES:
        path = root / rel
        if path.is_file():
            return path
    return None


@pytest.fixture(scope="session")
def real_csv_path():
    return find_real_csv()


@pytest.fixture(scope="session")
def public_layout_csv(tmp_path_factory, real_csv_path):
    """A file with the public dataset's shape: the real one when present,
    otherwise a synthetic stand-in with the same layout and label histogram."""
    if real_csv_path is not None:
        return real_csv_path
    path = tmp_path_factory.mktemp("data") / "synthetic_public.csv"
    write_synthetic_public_csv(path, seed=0)
    return path
