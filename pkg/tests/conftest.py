import functools
from pathlib import Path

import numpy as np
import pytest

from lure_cert import benchmarks, certify, lti

DATA = Path(__file__).resolve().parents[1] / "src" / "lure_cert" / "data"


@functools.lru_cache(maxsize=None)
def lifting_result(case_id: int):
    c = benchmarks.CASES[case_id]
    return certify.maximize_alpha(c.tf, c.ell)


@functools.lru_cache(maxsize=None)
def zf_result(case_id: int):
    c = benchmarks.CASES[case_id]
    n_b, n_f = c.nb_nf
    return certify.maximize_alpha(c.tf, max(n_b, n_f), method="zf", n_b=n_b, n_f=n_f)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ex6_plant():
    return lti.load_plant(DATA / "ex6_plant.json")


@pytest.fixture
def ex6_printed_cert():
    return certify.Certificate.load(DATA / "ex6_printed_certificate.json")


def random_stable_tf(rng, order):
    poles = []
    while len(poles) < order:
        if order - len(poles) >= 2 and rng.random() < 0.5:
            r, th = rng.uniform(0.1, 0.9), rng.uniform(0, np.pi)
            poles += [r * np.exp(1j * th), r * np.exp(-1j * th)]
        else:
            poles.append(rng.uniform(-0.9, 0.9))
    den = np.real(np.poly(poles))
    num = rng.normal(size=rng.integers(1, order + 2))
    return lti.tf_from_coeffs(num, den)


ACCEPTANCE_LINES = []


def report(criterion: int, ok: bool, detail: str):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
