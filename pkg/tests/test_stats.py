import numpy as np
import pytest

from holotweezers.errors import InvalidParameterError
from holotweezers.stats import SurvivalResult, count_inversions, keyed_normals, substream, wilson_interval

Z95 = 1.959963984540054


def test_wilson_closed_form_at_the_edges():
    n = 250
    hi0 = Z95**2 / (n + Z95**2)
    assert wilson_interval(0, n) == pytest.approx((0.0, hi0), rel=1e-12)
    lo, hi = wilson_interval(n, n)
    assert lo == pytest.approx(1 - hi0, rel=1e-12) and hi == 1.0


def test_wilson_hand_value():
    # 7/10: centre and half-width evaluated by hand with z = 1.959964 (independent script)
    lo, hi = wilson_interval(7, 10)
    assert lo == pytest.approx(0.3967781, abs=1e-7)
    assert hi == pytest.approx(0.8922087, abs=1e-7)


def test_wilson_rejects_zero_trials():
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


def test_substreams_are_keyed_not_ordered():
    a = substream(5, 0, 3).standard_normal(4)
    substream(5, 0, 2).standard_normal(100)
    assert np.array_equal(a, substream(5, 0, 3).standard_normal(4))
    assert not np.array_equal(a, substream(5, 1, 3).standard_normal(4))
    assert not np.array_equal(a, substream(6, 0, 3).standard_normal(4))


def test_keyed_normals_slices_reproduce():
    full = keyed_normals(11, 10, 6)
    part = keyed_normals(11, 4, 6, start=3)
    assert np.array_equal(full[3:7], part)


def test_survival_result():
    r = SurvivalResult(250, 200)
    assert r.probability == 0.8
    assert r.stderr == pytest.approx(np.sqrt(0.8 * 0.2 / 250))
    lo, hi = r.wilson_interval
    assert lo < 0.8 < hi
    with pytest.raises(InvalidParameterError):
        SurvivalResult(10, 11)


def test_count_inversions():
    assert count_inversions([1.0, 0.9, 0.9, 0.5]) == 0
    assert count_inversions([1.0, 0.9, 0.95, 0.5]) == 1
    assert count_inversions([0.1, 0.2, 0.15], increasing=True) == 1
