import pytest

from ipgkit.counters import OracleCounter


def test_totals_and_copy():
    c = OracleCounter()
    c.add(A_matvecs=2, Abart_matvecs=3, prox_gbar_calls=1)
    assert c.matvecs == 5 and c.prox_calls == 1
    d = c.copy()
    d.add(grad_f0_calls=1)
    assert c.grad_f0_calls == 0 and d.to_dict()["grad_f0_calls"] == 1


def test_rejects_unknown_and_negative():
    with pytest.raises(KeyError):
        OracleCounter().add(hessian_calls=1)
    with pytest.raises(ValueError):
        OracleCounter().add(A_matvecs=-1)
