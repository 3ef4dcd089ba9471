import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aahbath.errors import DomainError, SingularInputError
from aahbath.green import (GreenEvaluator, green_closed, green_exact_d1,
                           green_quadrature, van_hove_points)


def kspace(e, m, d, n=128):
    """Periodic trapezoid sum of the Brillouin-zone integral."""
    k = 2 * np.pi * np.arange(n) / n
    grids = np.meshgrid(*([k] * d), indexing="ij")
    ksum = sum(grids)
    band = sum(np.cos(g) for g in grids)
    return complex(np.mean(np.exp(1j * m * ksum) / (e + band)))


@pytest.mark.parametrize("d,e,m,n", [
    (1, 0.4 + 0.3j, 2, 4096),
    (2, 3 + 0.5j, 1, 2048),
    (2, 0.7 - 0.4j, 0, 2048),
    (3, 1.2 + 0.5j, 2, 128),
    (3, -4.0 + 0.0j, 1, 64),
])
def test_quadrature_matches_brillouin_zone_sum(d, e, m, n):
    ref = kspace(e, m, d, n)
    got = green_quadrature(e, m, d).value
    assert abs(got - ref) < 1e-6 * max(1.0, abs(ref))


@pytest.mark.parametrize("e", [0.3 + 0.2j, 0.3 - 0.05j, -0.8 - 0.2j, 2.5, -1.7 - 0.3j])
@pytest.mark.parametrize("sheet", ["physical", "continued"])
def test_d1_exact_form(e, sheet):
    for m in (0, 1, 5):
        q = green_quadrature(e, m, 1, sheet=sheet).value
        assert abs(q - green_exact_d1(e, m, sheet=sheet)) < 1e-11


def test_sheets_agree_above_and_differ_below():
    e = 0.4 + 0.1j
    assert green_quadrature(e, 1, 2).value == pytest.approx(
        green_quadrature(e, 1, 2, sheet="continued").value, abs=1e-13)
    below = 0.4 - 0.1j
    phys = green_quadrature(below, 1, 2).value
    cont = green_quadrature(below, 1, 2, sheet="continued").value
    assert abs(phys - cont) > 1e-2
    assert phys == pytest.approx(green_quadrature(e, 1, 2).value.conjugate(), abs=1e-13)


def test_real_in_band_is_lower_limit():
    val = green_quadrature(0.5, 0, 1).value
    assert val.imag > 0  # Im f(e - i0) = +pi * DOS
    assert val == pytest.approx(green_quadrature(0.5 - 1e-9j, 0, 1).value, abs=1e-6)


def test_continuity_across_band_on_continued_sheet():
    for d in (2, 3):
        above = green_quadrature(0.5 + 1e-7j, 2, d, sheet="continued").value
        below = green_quadrature(0.5 - 1e-7j, 2, d, sheet="continued").value
        assert abs(above - below) < 1e-5


def test_band_edge_and_van_hove_raise():
    with pytest.raises(SingularInputError):
        green_quadrature(2.0, 0, 2)
    with pytest.raises(SingularInputError):
        green_quadrature(-1.0, 3, 1)
    with pytest.raises(SingularInputError):
        green_quadrature(0.0, 0, 2)
    assert list(van_hove_points(3)) == [-3, -1, 1, 3]


@settings(max_examples=20, deadline=None)
@given(st.floats(3.2, 8.0), st.integers(0, 6), st.sampled_from([1, 2, 3]))
def test_outside_band_real_symmetric_decaying(x, m, d):
    e = x + d - 3.0 + 0.2
    f0 = green_quadrature(e, m, d).value
    f1 = green_quadrature(e, m + 1, d).value
    assert abs(f0.imag) < 1e-12
    assert abs(f1) <= abs(f0) + 1e-14
    assert green_quadrature(-e, m, d).value == pytest.approx(
        (-1) ** (m * d + 1) * f0, abs=1e-12)


def test_d1_closed_form_ratio():
    # closed form / integral is pi (-1)^m for e > 0 and pi for e < 0
    for e in (1.5, 3.0, -2.0):
        for m in (0, 1, 4):
            ratio = green_closed(e, m, 1).value / green_quadrature(e, m, 1).value
            want = math.pi * ((-1) ** m if e > 0 else 1)
            assert ratio == pytest.approx(want, rel=1e-10)
    assert green_closed(2.0, 0, 1).value == pytest.approx(math.pi / math.sqrt(3))


@pytest.mark.parametrize("e", [3.5, 4.0, 6.0, -4.0])
def test_d3_closed_form(e):
    for m in (0, 1, 2):
        assert green_closed(e, m, 3).value == pytest.approx(
            green_quadrature(e, m, 3).value, rel=1e-10, abs=1e-14)


def test_d2_closed_form_as_written_disagrees():
    c = green_closed(3.0, 0, 2).value
    q = green_quadrature(3.0, 0, 2).value
    assert c.real == pytest.approx(0.2310, abs=1e-3)
    assert q.real == pytest.approx(0.3840, abs=1e-3)


def test_closed_domain_errors():
    with pytest.raises(DomainError):
        green_closed(0.5, 0, 1)
    with pytest.raises(DomainError):
        green_closed(1.0 + 0.5j, 0, 1)
    with pytest.raises(DomainError):
        green_closed(1.5, 0, 2)
    with pytest.raises(DomainError):
        green_closed(1.0, 0, 3)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_evaluator_matches_quadrature(d):
    ev = GreenEvaluator(d, 8)
    E = np.array([0.3 - 0.2j, -0.7 - 0.45j, 1.3 + 0.4j, d + 0.8, -d - 1.1, 0.2 + 2j])
    for sheet in ("continued", "physical"):
        table = ev(E, sheet=sheet)
        for i, e in enumerate(E):
            for m in (0, 3, 8):
                ref = green_quadrature(e, m, d, sheet=sheet).value
                assert abs(table[i, m] - ref) < 1e-11
