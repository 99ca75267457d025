import math
import random

import numpy as np
import pytest

from cadelta.errors import (
    CrsMismatch,
    InvalidArgument,
    LabelOutOfTable,
    MissingGeoreference,
    SingularTransform,
)
from cadelta.geo import (
    ClassMask,
    CrsTag,
    GeoRef,
    GeoTransform,
    Raster,
    ground_resolution,
    pixel_to_world,
    resample_nearest,
    world_to_pixel,
)

GT_NORTH_UP = GeoTransform(0.25, 0.0, 500000.0, 0.0, -0.25, 5100000.0)


def test_pixel_to_world_anchor_is_first_pixel_center():
    assert pixel_to_world(GT_NORTH_UP, 0, 0) == (500000.0, 5100000.0)


def test_pixel_to_world_examples():
    # one pixel right = +a in X, one pixel down = +e in Y
    assert pixel_to_world(GT_NORTH_UP, 1, 0) == (500000.25, 5100000.0)
    assert pixel_to_world(GT_NORTH_UP, 0, 1) == (500000.0, 5099999.75)
    x, y = pixel_to_world(GT_NORTH_UP, 10, 20)
    assert x == pytest.approx(500002.5)
    assert y == pytest.approx(5099995.0)


def test_pixel_to_world_fractional_corner():
    # the raster's outer corner sits half a pixel up-left of the anchor center
    x, y = pixel_to_world(GT_NORTH_UP, -0.5, -0.5)
    assert x == pytest.approx(500000.0 - 0.125)
    assert y == pytest.approx(5100000.0 + 0.125)


def test_world_to_pixel_swapped_axes():
    # a transform where world X follows rows and world Y follows columns
    gt = GeoTransform(0.0, 1.0, 0.0, 1.0, 0.0, 0.0)
    col, row = world_to_pixel(gt, 5.0, 7.0)
    assert col == pytest.approx(7.0)
    assert row == pytest.approx(5.0)


def test_world_to_pixel_singular():
    gt = GeoTransform(1.0, 2.0, 0.0, 2.0, 4.0, 0.0)  # rank-1 linear part
    with pytest.raises(SingularTransform):
        world_to_pixel(gt, 1.0, 1.0)


def test_round_trip_many_random_transforms():
    # rotated/scaled grids over realistic scan parameters: 0.05..10 m/px,
    # offsets up to +-100 km, pixels inside a raster of up to 4096 px
    rng = random.Random(4821)
    worst = 0.0
    for _ in range(1000):
        theta = rng.uniform(0, 2 * math.pi)
        sx = rng.uniform(0.05, 10.0)
        sy = rng.uniform(0.05, 10.0)
        mirror = rng.choice((1.0, -1.0))  # north-up grids have det < 0
        gt = GeoTransform(
            a=sx * math.cos(theta),
            b=-sy * math.sin(theta),
            c=rng.uniform(-1e5, 1e5),
            d=mirror * sx * math.sin(theta),
            e=mirror * sy * math.cos(theta),
            f=rng.uniform(-1e5, 1e5),
        )
        col = rng.uniform(-0.5, 4096.0)
        row = rng.uniform(-0.5, 4096.0)
        x, y = pixel_to_world(gt, col, row)
        col2, row2 = world_to_pixel(gt, x, y)
        worst = max(worst, abs(col2 - col), abs(row2 - row))
    assert worst < 1e-9


def test_ground_resolution_known_value():
    # 1:2880 sheet scanned at 300 dpi
    assert ground_resolution(2880, 300) == pytest.approx(0.24384)


def test_ground_resolution_scale_invariance():
    rng = random.Random(99)
    for _ in range(200):
        scale = rng.uniform(100, 100000)
        dpi = rng.uniform(72, 1200)
        k = rng.uniform(0.1, 10)
        r1 = ground_resolution(scale, dpi)
        r2 = ground_resolution(scale * k, dpi * k)
        assert r2 == pytest.approx(r1, rel=1e-12)


def test_ground_resolution_rejects_nonpositive():
    with pytest.raises(InvalidArgument):
        ground_resolution(0, 300)
    with pytest.raises(InvalidArgument):
        ground_resolution(2880, -1)


def test_crs_metric_flag():
    assert CrsTag("EPSG:32633").is_metric
    assert not CrsTag("EPSG:4326", units="deg").is_metric
    with pytest.raises(InvalidArgument):
        CrsTag("")


def test_mask_rejects_labels_outside_table():
    with pytest.raises(LabelOutOfTable):
        ClassMask.from_array(np.array([[0, 3]], dtype=np.uint8))


def test_arrays_are_frozen():
    r = Raster.from_array(np.zeros((2, 2, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        r.samples[0, 0, 0] = 1
    m = ClassMask.from_array(np.zeros((2, 2), dtype=np.uint8))
    with pytest.raises(ValueError):
        m.labels[0, 0] = 1


def _georef(gt: GeoTransform) -> GeoRef:
    return GeoRef(gt, CrsTag("EPSG:32633"))


def test_resample_nearest_upscale_duplicates_pixels():
    src_gt = GeoTransform(1.0, 0.0, 10.0, 0.0, -1.0, 20.0)
    src = ClassMask.from_array(np.array([[1, 2], [0, 1]], dtype=np.uint8), geo=_georef(src_gt))
    # same extent at double density: scale halves, anchor center moves in by 1/4 px
    dst_gt = GeoTransform(0.5, 0.0, 9.75, 0.0, -0.5, 20.25)
    out = resample_nearest(src, dst_gt, 4, 4)
    expect = np.array(
        [[1, 1, 2, 2],
         [1, 1, 2, 2],
         [0, 0, 1, 1],
         [0, 0, 1, 1]], dtype=np.uint8)
    assert np.array_equal(out.labels, expect)
    assert out.geo.transform == dst_gt


def test_resample_nearest_out_of_bounds_is_background():
    src_gt = GeoTransform(1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
    src = ClassMask.from_array(np.full((2, 2), 2, dtype=np.uint8), geo=_georef(src_gt))
    # shift one pixel right: last destination column falls outside the source
    dst_gt = GeoTransform(1.0, 0.0, 1.0, 0.0, -1.0, 0.0)
    out = resample_nearest(src, dst_gt, 2, 2)
    assert np.array_equal(out.labels, np.array([[2, 0], [2, 0]], dtype=np.uint8))


def test_resample_nearest_identity_grid_is_idempotent():
    rng = np.random.default_rng(7)
    arr = rng.integers(0, 3, size=(13, 17), dtype=np.uint8)
    gt = GeoTransform(0.25, 0.0, 1000.0, 0.0, -0.25, 2000.0)
    src = ClassMask.from_array(arr, geo=_georef(gt))
    out = resample_nearest(src, gt, 17, 13)
    assert np.array_equal(out.labels, src.labels)


def test_resample_nearest_raster_bands_survive():
    rng = np.random.default_rng(11)
    arr = rng.integers(0, 256, size=(4, 5, 3), dtype=np.uint8)
    gt = GeoTransform(1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
    src = Raster.from_array(arr, geo=_georef(gt))
    out = resample_nearest(src, gt, 5, 4)
    assert isinstance(out, Raster)
    assert out.bands == 3
    assert np.array_equal(out.samples, arr)


def test_resample_requires_georef_and_matching_crs():
    src = ClassMask.from_array(np.zeros((2, 2), dtype=np.uint8))
    gt = GeoTransform(1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
    with pytest.raises(MissingGeoreference):
        resample_nearest(src, gt, 2, 2)
    src2 = ClassMask.from_array(np.zeros((2, 2), dtype=np.uint8), geo=_georef(gt))
    with pytest.raises(CrsMismatch):
        resample_nearest(src2, gt, 2, 2, target_crs=CrsTag("EPSG:3857"))
