import math

import pytest

from thermo_network.network.time_functions import CONSTANT, RAMP, TABLE, ZERO, TimeFunction
from thermo_network.utils.errors import DomainError


def test_constant():
    fn = TimeFunction.constant(2.5)
    assert fn.kind == CONSTANT
    assert fn(0.0) == fn(1e6) == 2.5
    assert fn.bounds() == (2.5, 2.5)
    assert not fn.is_zero
    assert ZERO.is_zero


def test_ramp_holds_its_end_values():
    fn = TimeFunction.ramp(300.0, 350.0, 1.0, 6.0)
    assert fn.kind == RAMP
    assert fn(0.0) == 300.0
    assert fn(1.0) == 300.0
    assert fn(3.5) == pytest.approx(325.0)
    assert fn(6.0) == 350.0
    assert fn(100.0) == 350.0
    assert fn.bounds() == (300.0, 350.0)


def test_falling_ramp_bounds():
    assert TimeFunction.ramp(2.0, -1.0, 0.0, 1.0).bounds() == (-1.0, 2.0)


def test_table_interpolates_and_clamps():
    fn = TimeFunction.table([0.0, 1.0, 3.0], [1.0, 3.0, 2.0], source='inlet.txt')
    assert fn.kind == TABLE
    assert fn(-1.0) == 1.0
    assert fn(0.5) == pytest.approx(2.0)
    assert fn(2.0) == pytest.approx(2.5)
    assert fn(10.0) == 2.0
    assert fn.bounds() == (1.0, 3.0)


def test_table_source_does_not_affect_equality():
    assert TimeFunction.table([0, 1], [1, 2], source='a.txt') == TimeFunction.table([0, 1], [1, 2])


@pytest.mark.parametrize('build', [
    lambda: TimeFunction.ramp(0.0, 1.0, 2.0, 2.0),
    lambda: TimeFunction.ramp(0.0, 1.0, 3.0, 1.0),
    lambda: TimeFunction.table([], []),
    lambda: TimeFunction.table([0.0, 1.0], [1.0]),
    lambda: TimeFunction.table([0.0, 0.0], [1.0, 2.0]),
    lambda: TimeFunction.constant(math.inf),
    lambda: TimeFunction(kind='sine'),
])
def test_invalid_functions_rejected(build):
    with pytest.raises(DomainError):
        build()
