from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent.parent
SCENARIO_20JOB = REPO_ROOT / "data" / "scenario_20job.json"


@pytest.fixture(scope="session")
def scenario_path():
    assert SCENARIO_20JOB.is_file(), "bundled 20-job scenario missing"
    return str(SCENARIO_20JOB)
