import numpy as np
import pytest

from qtomo.qcore import RandomStream


@pytest.fixture
def rs(request):
    # one stream per test, keyed on the test name so tests do not share draws
    sid = sum(ord(c) * 31 ** i for i, c in enumerate(request.node.name)) % (2 ** 31)
    return RandomStream(20261016, sid)


@pytest.fixture
def gen(rs):
    return rs.generator


def binom_se(p, n):
    return np.sqrt(max(p * (1 - p), 1e-12) / n)
