import os

import pytest


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    """Session-wide critical-value cache shared across tests."""
    return str(tmp_path_factory.mktemp("critval-cache"))


@pytest.fixture(autouse=True)
def _isolated_cache_env(monkeypatch):
    # keep tests away from any user-level cache
    monkeypatch.delenv("CPT_CACHE_DIR", raising=False)


def pytest_addoption(parser):
    parser.addoption(
        "--run-data-tests", action="store_true", default=False,
        help="run the opt-in real-data replications (need CPT_ERICSSON_CSV / CPT_USREC_CSV)",
    )


# known critical value of sup ||W_3||^2 at alpha = 0.05 (q == 1), used to
# decouple fast tests from the Monte Carlo quantile machinery
C_ALPHA_D3_05 = 3.004
