"""alr transform and its inverse."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multipat.compositional import (
    alr_inverse,
    alr_transform,
    multiplicative_replacement,
)
from multipat.errors import NonPositiveComponentError, SumOutOfToleranceError


class TestAlrTransform:
    def test_uniform_composition_maps_to_zero(self):
        np.testing.assert_allclose(alr_transform([1 / 3, 1 / 3, 1 / 3], ref=2),
                                   [0.0, 0.0], atol=1e-15)

    def test_direct_arithmetic(self):
        # log(0.2/0.5) and log(0.3/0.5)
        out = alr_transform([0.2, 0.3, 0.5], ref=2)
        np.testing.assert_allclose(
            out, [-0.916290731874155, -0.5108256237659907], rtol=1e-12)

    def test_zero_share_is_an_error(self):
        with pytest.raises(NonPositiveComponentError):
            alr_transform([0.5, 0.0, 0.5], ref=2)

    def test_sum_out_of_tolerance(self):
        with pytest.raises(SumOutOfToleranceError):
            alr_transform([0.3, 0.3, 0.3], ref=2)

    def test_renormalizes_within_tolerance(self):
        out = alr_transform([0.2, 0.3, 0.5 + 5e-7], ref=2)
        np.testing.assert_allclose(
            out, [np.log(0.2 / (0.5 + 5e-7)), np.log(0.3 / (0.5 + 5e-7))], rtol=1e-9)

    def test_reference_index_variants(self):
        p = [0.2, 0.3, 0.5]
        np.testing.assert_allclose(alr_transform(p, ref=0),
                                   [np.log(1.5), np.log(2.5)], rtol=1e-12)
        np.testing.assert_allclose(alr_transform(p, ref=-1), alr_transform(p, ref=2))

    def test_order_preserved(self):
        out = alr_transform([0.1, 0.2, 0.3, 0.4], ref=1)
        np.testing.assert_allclose(
            out, np.log(np.array([0.1, 0.3, 0.4]) / 0.2), rtol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 10.0), min_size=2, max_size=8),
       st.integers(min_value=0, max_value=7))
def test_alr_roundtrip(raw, ref_raw):
    raw = np.asarray(raw)
    props = raw / raw.sum()
    ref = ref_raw % props.size
    back = alr_inverse(alr_transform(props, ref=ref), ref=ref)
    np.testing.assert_allclose(back, props, atol=1e-12)


class TestMultiplicativeReplacement:
    def test_zeros_replaced_with_half_min_positive(self):
        out = multiplicative_replacement([0.5, 0.0, 0.5])
        assert out[1] == pytest.approx(0.25 / 1.25)
        assert out.sum() == pytest.approx(1.0)

    def test_no_zeros_is_identity_up_to_normalization(self):
        out = multiplicative_replacement([0.2, 0.3, 0.5])
        np.testing.assert_allclose(out, [0.2, 0.3, 0.5], rtol=1e-12)

    def test_all_zero_rejected(self):
        with pytest.raises(NonPositiveComponentError):
            multiplicative_replacement([0.0, 0.0])
