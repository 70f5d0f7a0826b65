import sys
from pathlib import Path

import numpy as np
import pytest

TESTS = Path(__file__).resolve().parent
ROOT = TESTS.parent
DATA = ROOT / "data"
CASES = DATA / "cases"
MINI_DB = DATA / "minidb.csv"
FULL_DB = DATA / "full_db.csv"

sys.path.insert(0, str(TESTS))

from founderlr.genetics import CaseSpec, Marker  # noqa: E402

POPS = ("Caucasian", "Afro-Caribbean", "Hispanic")


def d3_thoi_markers():
    d3 = Marker("D3", ("11", "17", "other"),
                {p: np.array([a, b, 1 - a - b]) for p, a, b in zip(POPS, (0.002, 0, 0), (0.215, 0.205, 0.204))})
    th = Marker("THO1", ("7", "other"), {p: np.array([a, 1 - a]) for p, a in zip(POPS, (0.190, 0.421, 0.279))})
    return {"D3": d3, "THO1": th}


def criminal_two_marker_case():
    return CaseSpec("criminal-id", ("D3", "THO1"),
                    genotypes={"s": {"D3": ("11", "17"), "THO1": ("7", "7")}},
                    trace={"D3": ("11", "17"), "THO1": ("7", "7")})


@pytest.fixture
def mini_markers():
    return d3_thoi_markers()


@pytest.fixture
def criminal_case():
    return criminal_two_marker_case()


@pytest.fixture
def full_db():
    if not FULL_DB.exists():
        pytest.skip(f"full frequency DB not present at {FULL_DB}")
    from founderlr.io import load_frequency_db
    return load_frequency_db(FULL_DB)
