import random

import numpy as np
import pytest

from mbtrunc.he import keygen, keypair_from_primes


@pytest.fixture(scope="session")
def small_keys():
    return keygen(128, seed=11)


@pytest.fixture(scope="session")
def keys512():
    return keygen(512, seed=2024)


@pytest.fixture(scope="session")
def toy_keys():
    return keypair_from_primes(5, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def enc_rng():
    return random.Random(99)


_criteria = []


@pytest.fixture(scope="session")
def criterion_log():
    return _criteria


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in _criteria:
            terminalreporter.write_line(line)
