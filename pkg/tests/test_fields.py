import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epl.fields import (
    ACConfig,
    ac_adjoint,
    anisotropic_convolve,
    make_splitter,
    one_hot,
    potential_oracle,
    shift2d,
    standard_convolve,
)


def cfg(w=5, kind="A"):
    return ACConfig(kernel_size=w, splitter=make_splitter(kind))


class TestOneHot:
    def test_single_pixel(self):
        out = one_hot(np.array([[0]]), 2)
        npt.assert_array_equal(out, [[[1.0]], [[0.0]]])

    def test_checkerboard(self):
        out = one_hot(np.array([[0, 1], [1, 0]]), 2)
        npt.assert_array_equal(out[0], [[1, 0], [0, 1]])
        npt.assert_array_equal(out[1], [[0, 1], [1, 0]])

    def test_channel_sums_are_one(self):
        rng = np.random.default_rng(0)
        lab = rng.integers(0, 4, (8, 8))
        out = one_hot(lab, 4)
        for y in range(8):
            for x in range(8):
                assert out[:, y, x].sum() == 1.0
                assert out[lab[y, x], y, x] == 1.0

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            one_hot(np.array([[3]]), 3)
        with pytest.raises(ValueError):
            one_hot(np.array([[-1]]), 3)


class TestSplitter:
    def test_a_has_the_four_axes_in_order(self):
        s = make_splitter("A")
        assert s.directions == ((-1, 0), (1, 0), (0, -1), (0, 1))
        assert len(s) == 4

    def test_b_is_the_four_diagonals_disjoint_from_a(self):
        a = set(make_splitter("A").directions)
        b = set(make_splitter("B").directions)
        assert len(b) == 4
        assert not a & b
        assert all(dy in (-1, 1) and dx in (-1, 1) for dy, dx in b)

    def test_c_is_the_union(self):
        c = make_splitter("C")
        assert len(c) == 8
        assert set(c.directions) == set(make_splitter("A").directions) | set(
            make_splitter("B").directions
        )

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_splitter("D")


class TestACConfig:
    @pytest.mark.parametrize("w", [2, 4, 1, 0])
    def test_rejects_bad_kernel(self, w):
        with pytest.raises(ValueError):
            cfg(w)

    def test_radius(self):
        assert cfg(5).radius == 2
        assert cfg(7).radius == 3


class TestAnisotropicConvolve:
    def test_binary_row_profile(self):
        field = np.array([[0, 0, 1, 1, 1, 0, 0]], dtype=float)[None]
        e = anisotropic_convolve(field, cfg(5))
        right = cfg(5).splitter.directions.index((0, 1))
        npt.assert_array_equal(e[right, 0, 0], [1, 2, 3, 2, 1, 0, 0])

    def test_zero_field(self):
        e = anisotropic_convolve(np.zeros((2, 6, 6)), cfg(7, "C"))
        assert e.shape == (8, 2, 6, 6)
        assert not e.any()

    def test_square_energy_range_w5(self):
        lab = np.zeros((7, 7), dtype=int)
        lab[2:5, 2:5] = 1
        e = anisotropic_convolve(one_hot(lab, 2), cfg(5))
        assert set(np.unique(e[:, 1])) <= {0.0, 1.0, 2.0, 3.0}

    def test_all_ones_interior_saturates(self):
        e = anisotropic_convolve(np.ones((1, 12, 12)), cfg(7, "C"))
        r = 3
        interior = e[:, :, r:-r, r:-r]
        npt.assert_array_equal(interior, np.full_like(interior, r + 1))

    @pytest.mark.parametrize("kind", ["A", "B", "C"])
    @pytest.mark.parametrize("w", [3, 5, 7])
    def test_matches_oracle_binary(self, kind, w):
        rng = np.random.default_rng(w * 10 + ord(kind))
        field = (rng.random((3, 9, 11)) > 0.5).astype(float)
        c = cfg(w, kind)
        npt.assert_array_equal(anisotropic_convolve(field, c), potential_oracle(field, c))

    def test_matches_oracle_real(self):
        rng = np.random.default_rng(5)
        field = rng.random((2, 10, 10))
        c = cfg(7, "C")
        diff = np.abs(anisotropic_convolve(field, c) - potential_oracle(field, c))
        assert diff.max() < 1e-9

    def test_binary_energies_are_integers_in_range(self):
        rng = np.random.default_rng(11)
        field = (rng.random((2, 8, 8)) > 0.4).astype(float)
        for w in (3, 5, 7):
            e = anisotropic_convolve(field, cfg(w))
            assert np.array_equal(e, np.rint(e))
            assert e.min() >= 0 and e.max() <= w // 2 + 1

    def test_translation_equivariance(self):
        rng = np.random.default_rng(2)
        field = rng.random((1, 14, 14))
        c = cfg(5)
        a, b = 2, 1
        shifted = shift2d(field, -a, -b)  # content moves down/right by (a, b)
        e_then_shift = shift2d(anisotropic_convolve(field, c), -a, -b)
        shift_then_e = anisotropic_convolve(shifted, c)
        m = c.radius + max(a, b)
        npt.assert_allclose(
            shift_then_e[..., m:-m, m:-m], e_then_shift[..., m:-m, m:-m], atol=1e-12
        )

    def test_mirror_symmetry(self):
        rng = np.random.default_rng(3)
        field = rng.random((2, 9, 9))
        c = cfg(5)
        dirs = c.splitter.directions
        e = anisotropic_convolve(field, c)
        e_m = anisotropic_convolve(field[..., ::-1], c)
        npt.assert_allclose(
            e[dirs.index((0, 1))], e_m[dirs.index((0, -1))][..., ::-1], atol=1e-12
        )

    @settings(max_examples=25, deadline=None)
    @given(
        alpha=st.floats(-3, 3, allow_nan=False),
        beta=st.floats(-3, 3, allow_nan=False),
        seed=st.integers(0, 100),
    )
    def test_linearity(self, alpha, beta, seed):
        rng = np.random.default_rng(seed)
        f = rng.random((2, 6, 6))
        g = rng.random((2, 6, 6))
        c = cfg(5, "B")
        lhs = anisotropic_convolve(alpha * f + beta * g, c)
        rhs = alpha * anisotropic_convolve(f, c) + beta * anisotropic_convolve(g, c)
        npt.assert_allclose(lhs, rhs, atol=1e-9)

    def test_energy_monotone_in_kernel_size(self):
        rng = np.random.default_rng(4)
        field = rng.random((2, 10, 10))
        previous = None
        for w in (3, 5, 7):
            e = anisotropic_convolve(field, cfg(w))
            if previous is not None:
                assert (e >= previous - 1e-12).all()
            previous = e

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValueError):
            anisotropic_convolve(np.zeros((4, 4)), cfg(5))


class TestAdjoint:
    def test_inner_product_identity(self):
        rng = np.random.default_rng(6)
        for kind, w in (("A", 5), ("C", 7), ("B", 3)):
            c = cfg(w, kind)
            x = rng.normal(size=(2, 8, 9))
            y = rng.normal(size=(len(c.splitter), 2, 8, 9))
            lhs = float((anisotropic_convolve(x, c) * y).sum())
            rhs = float((x * ac_adjoint(y, c)).sum())
            assert abs(lhs - rhs) < 1e-9

    def test_shape_check(self):
        with pytest.raises(ValueError):
            ac_adjoint(np.zeros((3, 2, 4, 4)), cfg(5, "A"))


class TestStandardConvolve:
    def test_zero_field(self):
        assert not standard_convolve(np.zeros((2, 5, 5)), 5).any()

    def test_impulse_response(self):
        field = np.zeros((1, 5, 5))
        field[0, 2, 2] = 1.0
        out = standard_convolve(field, 3)
        expected = np.zeros((5, 5))
        expected[1:4, 1:4] = 1.0
        npt.assert_array_equal(out[0], expected)

    def test_matches_window_sum_oracle(self):
        rng = np.random.default_rng(7)
        field = (rng.random((1, 8, 8)) > 0.5).astype(float)
        w = 5
        r = w // 2
        expected = np.zeros((8, 8))
        for y in range(8):
            for x in range(8):
                acc = 0.0
                for dy in range(-r, r + 1):
                    for dx in range(-r, r + 1):
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < 8 and 0 <= xx < 8:
                            acc += field[0, yy, xx]
                expected[y, x] = acc
        npt.assert_array_equal(standard_convolve(field, w)[0], expected)

    def test_rejects_even_kernel(self):
        with pytest.raises(ValueError):
            standard_convolve(np.zeros((1, 4, 4)), 4)


class TestShift2d:
    def test_shift_and_zero_fill(self):
        a = np.arange(9, dtype=float).reshape(3, 3)
        out = shift2d(a, 1, 0)
        npt.assert_array_equal(out[0], a[1])
        npt.assert_array_equal(out[2], 0)
        out = shift2d(a, 0, -1)
        npt.assert_array_equal(out[:, 1:], a[:, :2])
        npt.assert_array_equal(out[:, 0], 0)

    def test_shift_out_of_frame(self):
        a = np.ones((3, 3))
        assert not shift2d(a, 5, 0).any()
