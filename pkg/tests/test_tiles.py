import math
import random

import numpy as np
import pytest
from scipy import ndimage

from cadelta.errors import AddressOutOfRange, MissingGeoreference
from cadelta.geo import ClassMask, CrsTag, GeoRef, GeoTransform, Raster
from cadelta.tiles import (
    TILE_SIZE,
    TileAddress,
    encode_tile_png,
    layer_bbox,
    render_tile,
    root_square,
    suggested_max_zoom,
    tile_is_empty,
)

CRS = CrsTag("local-metric")


def north_up(res, x0, y1):
    return GeoRef(GeoTransform(a=res, b=0.0, c=x0 + res / 2, d=0.0, e=-res, f=y1 - res / 2), CRS)


def checker_mask(w, h, geo):
    labels = np.zeros((h, w), np.uint8)
    labels[: h // 2, : w // 2] = 1
    labels[h // 2:, w // 2:] = 2
    return ClassMask.from_array(labels, geo=geo)


def noisy_raster(w, h, geo, seed=0, bands=3):
    rng = np.random.default_rng(seed)
    return Raster.from_array(rng.integers(0, 256, (h, w, bands), np.uint8), geo=geo)


def test_address_validation():
    TileAddress(0, 0, 0)
    TileAddress(3, 7, 7)
    for z, x, y in ((-1, 0, 0), (0, 1, 0), (0, 0, 1), (2, 4, 0), (2, 0, 4), (1, -1, 0)):
        with pytest.raises(AddressOutOfRange):
            TileAddress(z, x, y)


def test_root_square_pads_to_max_dimension():
    geo = north_up(1.0, 0.0, 80.0)
    layer = checker_mask(100, 80, geo)
    assert layer_bbox(layer) == (0.0, 0.0, 100.0, 80.0)
    x0, y_top, side = root_square(layer)
    assert side == 100.0
    assert x0 == 0.0
    assert y_top == 90.0  # centered: 80-high bbox inside a 100-high square


def test_rotated_layer_bbox_uses_corners():
    t = math.radians(30)
    gt = GeoTransform(a=math.cos(t), b=math.sin(t), c=0.0,
                      d=math.sin(t), e=-math.cos(t), f=0.0)
    layer = ClassMask.from_array(np.ones((10, 20), np.uint8), geo=GeoRef(gt, CRS))
    minx, miny, maxx, maxy = layer_bbox(layer)
    assert maxx - minx == pytest.approx(20 * math.cos(t) + 10 * math.sin(t))
    assert maxy - miny == pytest.approx(20 * math.sin(t) + 10 * math.cos(t))


def test_missing_georeference():
    layer = ClassMask.from_array(np.ones((4, 4), np.uint8))
    with pytest.raises(MissingGeoreference):
        render_tile(layer, (0, 0, 0))


def test_root_tile_of_matching_square_layer_is_identity():
    geo = north_up(1.0, 0.0, 256.0)
    labels = np.random.default_rng(1).integers(0, 3, (256, 256)).astype(np.uint8)
    layer = ClassMask.from_array(labels, geo=geo)
    tile = render_tile(layer, (0, 0, 0))
    assert tile.shape == (TILE_SIZE, TILE_SIZE, 4)
    # each tile pixel lands inside exactly the matching source pixel
    assert np.array_equal(tile[:, :, 3] > 0, labels > 0)
    red = (tile[:, :, 0] == 200) & (tile[:, :, 1] == 40) & (tile[:, :, 2] == 40)
    assert np.array_equal(red, labels == 1)


def test_mask_background_is_transparent_and_classes_opaque():
    geo = north_up(1.0, 0.0, 64.0)
    layer = checker_mask(64, 64, geo)
    tile = render_tile(layer, (0, 0, 0))
    assert tile_is_empty(tile) is False
    assert (tile[:, :, 3][tile[:, :, 3] > 0] == 255).all()
    # quadrant with label 0 must be fully transparent
    assert (tile[:128, 128:, 3] == 0).all()


def mosaic(layer, z, resample=None):
    n = 1 << z
    rows = []
    for y in range(n):
        rows.append(np.concatenate(
            [render_tile(layer, (z, x, y), resample) for x in range(n)], axis=1))
    return np.concatenate(rows, axis=0)


def test_pyramid_consistency_nearest_exact():
    geo = north_up(0.5, 10.0, 40.0)
    layer = checker_mask(90, 60, geo)
    parent = render_tile(layer, (0, 0, 0))
    children = mosaic(layer, 1)
    assert np.array_equal(children[::2, ::2], parent)


def test_pyramid_consistency_bilinear_exact():
    geo = north_up(0.5, 10.0, 40.0)
    layer = noisy_raster(90, 60, geo, seed=3)
    parent = render_tile(layer, (0, 0, 0))
    children = mosaic(layer, 1)
    assert np.array_equal(children[::2, ::2], parent)


def test_pyramid_consistency_deeper_level():
    geo = north_up(0.25, -5.0, 5.0)
    layer = noisy_raster(70, 50, geo, seed=4)
    z1 = mosaic(layer, 1)
    z2 = mosaic(layer, 2)
    assert np.array_equal(z2[::2, ::2], z1)


def test_tile_outside_extent_is_fully_transparent():
    geo = north_up(1.0, 0.0, 10.0)  # wide strip: 100 x 10
    layer = checker_mask(100, 10, geo)
    # root square is 100 wide; the strip sits in the middle, so the top-left
    # z=2 tile covers padding only
    tile = render_tile(layer, (2, 0, 0))
    assert tile_is_empty(tile)
    assert (tile == 0).all()


def test_bilinear_matches_map_coordinates():
    rng = random.Random(9)
    geo = north_up(2.0, 100.0, 300.0)
    layer = noisy_raster(37, 23, geo, seed=11)
    from cadelta.tiles import _sample_points
    for _ in range(5):
        z = rng.randint(0, 2)
        addr = TileAddress(z, rng.randrange(1 << z), rng.randrange(1 << z))
        tile = render_tile(layer, addr, resample="bilinear")
        col, row, inside = _sample_points(layer, addr)
        for b in range(3):
            want = ndimage.map_coordinates(
                layer.samples[:, :, b].astype(np.float64),
                [np.clip(row, 0, 22), np.clip(col, 0, 36)], order=1, mode="nearest")
            got = tile[:, :, b].astype(np.float64)
            assert np.abs(got[inside] - want[inside]).max() <= 0.51


def test_constant_image_stays_constant_under_bilinear():
    geo = north_up(1.0, 0.0, 50.0)
    arr = np.full((50, 50, 3), 137, np.uint8)
    layer = Raster.from_array(arr, geo=geo)
    tile = render_tile(layer, (1, 1, 0))
    inside = tile[:, :, 3] > 0
    assert inside.any()
    assert (tile[:, :, 0][inside] == 137).all()


def test_four_band_raster_uses_nearest_and_keeps_alpha():
    geo = north_up(1.0, 0.0, 8.0)
    arr = np.zeros((8, 8, 4), np.uint8)
    arr[2:6, 2:6] = (255, 0, 0, 255)
    layer = Raster.from_array(arr, geo=geo)
    tile = render_tile(layer, (0, 0, 0))
    vals = np.unique(tile.reshape(-1, 4), axis=0)
    assert {tuple(v) for v in vals} <= {(0, 0, 0, 0), (255, 0, 0, 255)}


def test_suggested_max_zoom():
    assert suggested_max_zoom(checker_mask(256, 256, north_up(1.0, 0.0, 256.0))) == 0
    assert suggested_max_zoom(checker_mask(1024, 1024, north_up(1.0, 0.0, 1024.0))) == 2
    assert suggested_max_zoom(checker_mask(300, 300, north_up(1.0, 0.0, 300.0))) == 1


def test_png_encoding_is_lossless():
    import io
    from PIL import Image
    geo = north_up(1.0, 0.0, 64.0)
    tile = render_tile(checker_mask(64, 64, geo), (0, 0, 0))
    back = np.asarray(Image.open(io.BytesIO(encode_tile_png(tile))))
    assert np.array_equal(back, tile)
