import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import convolve1d

from chtf.filters import (_reduce_matrix, bank_from_dict, grid_bank, identity_bank,
                          make_general_bank, make_pyramid_bank, make_segmentation_bank,
                          segment_tensor)


@pytest.fixture
def image():
    return np.random.default_rng(0).standard_normal(8 * 6)


class TestSegmentation:
    def test_halves_partition(self, image):
        bank = make_segmentation_bank(48, [range(24), range(24, 48)])
        assert bank.partition_flag and bank.is_disjoint
        parts = [bank.apply(s, image) for s in range(2)]
        assert np.array_equal(parts[0] + parts[1], image)
        assert np.array_equal(parts[0][24:], np.zeros(24))

    def test_overlap_is_not_a_partition(self):
        bank = make_segmentation_bank(6, [[0, 1, 2, 3], [3, 4, 5]])
        assert not bank.partition_flag
        assert not bank.is_disjoint

    def test_uncovered_index_is_not_a_partition(self):
        bank = make_segmentation_bank(4, [[0, 1], [2]])
        assert bank.is_disjoint and not bank.partition_flag

    def test_matrix_agrees_with_apply(self, image):
        bank = grid_bank(8, 6, 2, 3)
        for s in range(len(bank)):
            np.testing.assert_array_equal(bank.matrix(s) @ image, bank.apply(s, image))

    def test_grid_regions_row_major(self):
        bank = grid_bank(4, 2, 1, 2)
        assert bank.regions[0].tolist() == [0, 1, 4, 5]
        assert bank.regions[1].tolist() == [2, 3, 6, 7]

    def test_segment_tensor(self):
        d = np.random.default_rng(1).standard_normal((6, 2, 3))
        bank = make_segmentation_bank(6, [[0, 2, 4], [1, 3, 5]])
        np.testing.assert_array_equal(segment_tensor(d, bank, 0) + segment_tensor(d, bank, 1), d)

    @pytest.mark.parametrize("regions", [[], [[]], [[0, 6]], [[-1]]])
    def test_bad_regions(self, regions):
        with pytest.raises(ValueError):
            make_segmentation_bank(6, regions)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            identity_bank(4).apply(0, np.ones(5))

    def test_roundtrip_dict(self):
        bank = grid_bank(4, 4, 2, 2)
        again = bank_from_dict(bank.to_dict())
        assert [r.tolist() for r in again.regions] == [r.tolist() for r in bank.regions]

    @given(n=st.integers(1, 40), parts=st.integers(1, 6), seed=st.integers(0, 2**31))
    @settings(max_examples=60, deadline=None)
    def test_partition_identity_property(self, n, parts, seed):
        rng = np.random.default_rng(seed)
        parts = min(parts, n)
        labels = np.concatenate([np.arange(parts), rng.integers(0, parts, n - parts)])
        rng.shuffle(labels)
        bank = make_segmentation_bank(n, [np.flatnonzero(labels == k) for k in range(parts)])
        d = rng.standard_normal((n, 3))
        total = np.zeros_like(d)
        for s in range(len(bank)):
            total = total + bank.apply(s, d)
        assert bank.partition_flag
        assert np.array_equal(total, d)


class TestPyramid:
    def test_single_level_is_identity(self):
        bank = make_pyramid_bank(5, 4, 1, "gaussian")
        assert np.array_equal(bank.operators[0], np.eye(20))

    @pytest.mark.parametrize("n", [3, 4, 7, 10])
    def test_reduce_matches_mirror_convolution(self, n):
        x = np.random.default_rng(n).standard_normal(n)
        kernel = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
        expected = convolve1d(x, kernel, mode="mirror")[::2]
        np.testing.assert_allclose(_reduce_matrix(n) @ x, expected, atol=1e-14)

    def test_laplacian_collapses(self, image):
        bank = make_pyramid_bank(8, 6, 3, "laplacian")
        total = sum(bank.apply(s, image) for s in range(len(bank)))
        assert np.max(np.abs(total - image)) <= 1e-10

    def test_constant_image(self):
        x = np.full(64, 3.0)
        gauss = make_pyramid_bank(8, 8, 3, "gaussian")
        for s in range(3):
            np.testing.assert_allclose(gauss.apply(s, x), x, atol=1e-12)
        lap = make_pyramid_bank(8, 8, 3, "laplacian")
        np.testing.assert_allclose(lap.apply(0, x), 0.0, atol=1e-12)

    def test_serializes_as_parameters(self):
        bank = make_pyramid_bank(6, 6, 2, "laplacian")
        again = bank_from_dict(bank.to_dict())
        for a, b in zip(bank.operators, again.operators):
            assert np.array_equal(a, b)

    @pytest.mark.parametrize("args", [(4, 4, 0, "gaussian"), (4, 4, 2, "median"), (0, 4, 2, "gaussian"),
                                      (1, 1, 2, "gaussian")])
    def test_bad_arguments(self, args):
        with pytest.raises(ValueError):
            make_pyramid_bank(*args)

    def test_dim_must_factor(self):
        with pytest.raises(ValueError):
            make_pyramid_bank(4, 4, 2, dim=15)


class TestGeneral:
    def test_partition_flag(self):
        a = np.diag([1.0, 0.0, 0.5])
        bank = make_general_bank([a, np.eye(3) - a])
        assert bank.partition_flag
        assert not make_general_bank([a]).partition_flag

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            make_general_bank([np.eye(2), np.eye(3)])
        with pytest.raises(ValueError):
            make_general_bank([])

    def test_no_compact_form(self):
        with pytest.raises(ValueError):
            make_general_bank([np.eye(2)]).to_dict()
