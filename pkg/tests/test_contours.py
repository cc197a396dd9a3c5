import math

import numpy as np
import pytest
import scipy.ndimage as ndi
from hypothesis import given, settings, strategies as st

from conftest import EIGHT, binary, check_well_formed, disk_mask, oracle_counts
from pupilkit.contours import (
    HOLE,
    OUTER,
    Contour,
    contour_metrics,
    diameter_from_area,
    extract_contours,
    shoelace_area,
    touches_border,
)


def test_empty_image():
    contours, hier = extract_contours(binary(np.zeros((8, 8), bool)))
    assert contours == [] and len(hier) == 0


def test_filled_square():
    m = np.zeros((20, 20), bool)
    m[5:15, 5:15] = True
    contours, hier = extract_contours(binary(m))
    assert len(contours) == 1
    assert contours[0].kind == OUTER and hier[0].parent is None
    assert contours[0].points[0] == (5, 5)
    met = contour_metrics(contours[0])
    assert met.area == pytest.approx(81.0)
    assert met.filled_area == pytest.approx(100.0)
    assert met.perimeter == pytest.approx(36.0)
    assert met.centroid == pytest.approx((9.5, 9.5))


def test_annulus_hierarchy():
    # 11x11 ring with a 5x5 hole: hand traced, outer border 40 px, hole border 24 px
    m = np.zeros((15, 15), bool)
    m[2:13, 2:13] = True
    m[5:10, 5:10] = False
    contours, hier = extract_contours(binary(m))
    assert [c.kind for c in contours] == [OUTER, HOLE]
    assert hier[0].first_child == 1 and hier[1].parent == 0
    assert hier[0].parent is None
    assert len(contours[0].points) == 40
    # hole border: ring pixels 4-adjacent to the gap, i.e. the 7x7 square
    # outline minus its corners, which touch the gap only diagonally
    ring = {(x, y) for x in range(4, 11) for y in range(4, 11) if x in (4, 10) or y in (4, 10)}
    corners = {(4, 4), (10, 4), (4, 10), (10, 10)}
    assert len(contours[1].points) == 20
    assert set(contours[1].points) == ring - corners


def test_nested_island_in_hole():
    m = np.zeros((30, 30), bool)
    m[2:28, 2:28] = True
    m[6:24, 6:24] = False
    m[12:18, 12:18] = True
    contours, hier = extract_contours(binary(m))
    assert [c.kind for c in contours] == [OUTER, HOLE, OUTER]
    assert hier[2].parent == 1 and hier[1].parent == 0
    assert hier.depth(2) == 2
    check_well_formed(contours, hier)


def test_diagonal_pixels_are_one_region():
    m = np.eye(6, dtype=bool)
    contours, _ = extract_contours(binary(m))
    assert len(contours) == 1


def test_single_pixel():
    m = np.zeros((5, 5), bool)
    m[2, 3] = True
    contours, _ = extract_contours(binary(m))
    assert contours[0].points == ((3, 2),)
    met = contour_metrics(contours[0])
    assert met.area == 0.0 and met.centroid == (3.0, 2.0) and met.filled_area == 1.0


def test_full_frame_foreground():
    contours, hier = extract_contours(binary(np.ones((6, 7), bool)))
    assert len(contours) == 1 and touches_border(contours[0], 7, 6)


@pytest.mark.parametrize("seed", range(500))
def test_counts_match_component_oracle(seed):
    r = np.random.default_rng(seed)
    h, w = r.integers(1, 65, size=2)
    mask = r.random((h, w)) < r.uniform(0.2, 0.8)
    contours, hier = extract_contours(binary(mask))
    regions, holes = oracle_counts(mask)
    assert sum(c.kind == OUTER for c in contours) == regions
    assert sum(c.kind == HOLE for c in contours) == holes
    check_well_formed(contours, hier)


def test_outer_contours_belong_to_distinct_regions(rng):
    mask = rng.random((64, 64)) < 0.45
    labels, _ = ndi.label(mask, structure=EIGHT)
    contours, _ = extract_contours(binary(mask))
    owners = []
    for c in contours:
        if c.kind == OUTER:
            ids = {labels[y, x] for x, y in c.points}
            assert len(ids) == 1 and 0 not in ids
            owners.append(ids.pop())
    assert len(owners) == len(set(owners))


@pytest.mark.parametrize("r,tol", [(20, 0.05), (35, 0.05), (50, 0.02), (80, 0.02)])
def test_disk_area_converges(r, tol):
    n = 2 * r + 9
    m = disk_mask(n, n, n // 2, n // 2, r)
    contours, _ = extract_contours(binary(m))
    assert len(contours) == 1
    met = contour_metrics(contours[0])
    assert abs(met.area - math.pi * r * r) / (math.pi * r * r) <= tol
    # on a simple border the filled count equals the raster pixel count
    assert met.filled_area == pytest.approx(m.sum())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 2**31 - 1))
def test_translation_invariance(dx, dy, seed):
    r = np.random.default_rng(seed)
    mask = np.zeros((60, 60), bool)
    mask[5:25, 5:25] = r.random((20, 20)) < 0.6
    moved = np.roll(np.roll(mask, dy, axis=0), dx, axis=1)
    a, ha = extract_contours(binary(mask))
    b, hb = extract_contours(binary(moved))
    assert len(a) == len(b)
    for ca, cb in zip(a, b):
        assert ca.kind == cb.kind
        assert cb.points == tuple((x + dx, y + dy) for x, y in ca.points)
        ma, mb = contour_metrics(ca), contour_metrics(cb)
        assert mb.area == pytest.approx(ma.area)
        assert mb.perimeter == pytest.approx(ma.perimeter)
        assert mb.centroid == pytest.approx((ma.centroid[0] + dx, ma.centroid[1] + dy))
    assert [n.parent for n in ha.nodes] == [n.parent for n in hb.nodes]


def test_metrics_square_example():
    c = Contour(((0, 0), (9, 0), (9, 9), (0, 9)), OUTER)
    assert contour_metrics(c).area == 81.0
    assert shoelace_area(c.as_array()) == 81.0


def test_diagonal_perimeter():
    c = Contour(((0, 1), (1, 0), (2, 1), (1, 2)), OUTER)
    assert contour_metrics(c).perimeter == pytest.approx(4 * math.sqrt(2))


def test_circularity_of_disk_near_one():
    m = disk_mask(120, 120, 60, 60, 50)
    c, _ = extract_contours(binary(m))
    assert 0.85 <= contour_metrics(c[0]).circularity <= 1.05


@pytest.mark.parametrize("area,d", [(7853.98, 100.0), (0.0, 0.0), (math.pi, 2.0)])
def test_diameter_from_area(area, d):
    assert diameter_from_area(area) == pytest.approx(d, abs=0.01)


def test_diameter_from_negative_area():
    with pytest.raises(ValueError):
        diameter_from_area(-1.0)
