"""
Shared fixtures for the composition test suite
"""

import csv

import pytest

from composition.problem import make_lcq, make_lcq_reference, make_nonconvex_synthetic


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-seed runs that take tens of seconds")


@pytest.fixture
def reference_lcq():
    """n=2, f(x) = 4x^2 - 4x + 2, x* = 0.5"""
    return make_lcq_reference()


@pytest.fixture
def small_lcq():
    return make_lcq(4, 2, 2, seed=3)


@pytest.fixture
def nonconvex_problem():
    return make_nonconvex_synthetic(32, 4, 4, beta=0.5, seed=7)


def write_config(path, **entries):
    """key=value file from keyword arguments; '__' in a name becomes '.'"""
    lines = []
    for key, value in entries.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key.replace('__', '.')}={value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def read_csv(path):
    """(comment header lines, data rows as dicts) of an output file"""
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    header = [line for line in lines if line.startswith("#")]
    rows = list(csv.DictReader(line for line in lines if not line.startswith("#")))
    return header, rows
