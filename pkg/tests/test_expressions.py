import numpy as np
import pytest

from l2pos.errors import InputError
from l2pos.expressions import parse_weight
from l2pos.geometry import Weight


@pytest.mark.parametrize("text", ["|z1|^2", "|z1|**2 + |z2|^2", "exp(x1) - log(1+|z2|^2)",
                                  "sqrt(1 + y1^2) * 3/2", "-x1 + +y2", "abs(x1 - y2)"])
def test_accepted(text):
    parse_weight(text, 2)


@pytest.mark.parametrize("text", ["z1", "|z3|^2", "sin(x1)", "x1 if x2 else y1", "__import__('os')",
                                  "x1.real", "[x1]", "x1 < 2", "lambda: 1", "|z1|^2 +", "w1"])
def test_rejected(text):
    with pytest.raises(InputError):
        parse_weight(text, 2)


def test_fiber_slots():
    w = Weight.from_expression("|z1|^2 + 2*|w1|^2 + u1", 1, 1)
    assert w.n == 2
    assert w(np.array([1.0 + 0j, 0.5])) == pytest.approx(1 + 0.5 + 0.5)
    assert np.allclose(w.hess(np.array([0j, 0j])), np.diag([1.0, 2.0]))


def test_modulus_semantics():
    w = Weight.from_expression("|z1|^2", 1)
    assert w(np.array([3 + 4j])) == pytest.approx(25.0)
    assert np.allclose(w.hess(np.array([1j])), [[1.0]])
