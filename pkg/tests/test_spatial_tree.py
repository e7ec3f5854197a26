import numpy as np
import pytest

from butterfly_sft.geometry import PRESETS, sample_curve_2d, sample_surface_3d
from butterfly_sft.spatial_tree import BoxId, boxes_at_level, build_tree, children, parent
from oracles import box_points


@pytest.fixture(scope="module")
def two_point_tree():
    return build_tree(np.array([[0.5, 0.5], [3.5, 3.5]]), 4)


class TestBoxId:
    def test_width_and_corner(self):
        b = BoxId(3, (2, 5))
        assert b.width(64) == 8
        assert b.corner(64) == (16, 40)

    def test_parent(self):
        assert parent(BoxId(3, (5, 2, 7))) == BoxId(2, (2, 1, 3))
        with pytest.raises(ValueError):
            parent(BoxId(0, (0, 0)))


class TestBuild:
    def test_two_points(self, two_point_tree):
        t = two_point_tree
        assert t.L == 2
        assert boxes_at_level(t, 2) == [BoxId(2, (0, 0)), BoxId(2, (3, 3))]
        assert children(t, BoxId(0, (0, 0))) == [BoxId(1, (0, 0)), BoxId(1, (1, 1))]
        assert children(t, BoxId(2, (3, 3))) == []

    def test_single_cell_chain(self):
        pts = np.random.default_rng(0).uniform(5, 6, size=(40, 2))
        t = build_tree(pts, 16)
        for level in range(t.L + 1):
            assert t.count(level) == 1
        assert boxes_at_level(t, t.L) == [BoxId(4, (5, 5))]

    def test_membership_brute_force(self):
        ps = sample_curve_2d(PRESETS["ellipse"], 64, 5)
        t = build_tree(ps, 64)
        seen = np.zeros(len(ps), int)
        for b in boxes_at_level(t, t.L):
            got = np.sort(t.points_in(b))
            np.testing.assert_array_equal(got, box_points(ps.points, b, 64))
            seen[got] += 1
        assert np.all(seen == 1)

    @pytest.mark.parametrize("level", [0, 2, 4, 6])
    def test_partition(self, level):
        ps = sample_curve_2d(PRESETS["kidney"], 64, 5)
        t = build_tree(ps, 64)
        parts = [t.points_in(b) for b in boxes_at_level(t, level)]
        allpts = np.concatenate(parts)
        assert allpts.size == len(ps)
        assert np.unique(allpts).size == len(ps)

    def test_half_open_faces(self):
        # a face point goes to the upper cell; the domain edge N stays in the last cell
        t = build_tree(np.array([[1.0, 2.0], [4.0, 4.0]]), 4)
        assert boxes_at_level(t, 2) == [BoxId(2, (1, 2)), BoxId(2, (3, 3))]

    def test_parents_present(self):
        ps = sample_surface_3d(PRESETS["sphere"], 16, 25)
        t = build_tree(ps, 16)
        for level in range(1, t.L + 1):
            for b in boxes_at_level(t, level):
                assert t.contains(parent(b))
                assert b in children(t, parent(b))

    def test_root_and_level_counts(self):
        ps = sample_curve_2d(PRESETS["star"], 128, 5)
        t = build_tree(ps, 128)
        assert boxes_at_level(t, 0) == [BoxId(0, (0, 0))]
        assert t.count(t.L) <= len(ps)

    def test_boxes_sorted(self):
        ps = sample_curve_2d(PRESETS["spiral"], 64, 5)
        t = build_tree(ps, 64)
        for level in range(t.L + 1):
            coords = [b.coords for b in boxes_at_level(t, level)]
            assert coords == sorted(coords)

    def test_curve_box_count_linear(self):
        # non-empty boxes at width w stay within C (N / w) for a curve
        N = 1024
        t = build_tree(sample_curve_2d(PRESETS["ellipse"], N, 5), N)
        for level in range(t.L + 1):
            assert t.count(level) <= 8 * 2**level

    def test_complementary_widths(self):
        N = 256
        L = 8
        for t in range(L + 1):
            assert BoxId(t, (0, 0)).width(N) * BoxId(L - t, (0, 0)).width(N) == N


class TestErrors:
    def test_outside(self):
        with pytest.raises(ValueError):
            build_tree(np.array([[0.5, 4.1]]), 4)
        with pytest.raises(ValueError):
            build_tree(np.array([[-0.1, 1.0]]), 4)

    def test_bad_N(self):
        with pytest.raises(ValueError):
            build_tree(np.array([[0.5, 0.5]]), 6)

    def test_level_range(self, two_point_tree):
        with pytest.raises(ValueError):
            boxes_at_level(two_point_tree, 3)

    def test_children_of_absent(self, two_point_tree):
        with pytest.raises(KeyError):
            children(two_point_tree, BoxId(1, (1, 0)))


def test_dump_format(two_point_tree):
    assert two_point_tree.dump() == "0 0 0 2\n1 0 0 1\n1 1 1 1\n2 0 0 1\n2 3 3 1\n"


def test_dump_3d():
    t = build_tree(np.array([[0.2, 1.5, 0.9]]), 2)
    assert t.dump().splitlines() == ["0 0 0 0 1", "1 0 1 0 1"]
