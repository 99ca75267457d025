import numpy as np

from cadelta.evaluator import evaluate
from cadelta.raster_io import load_mask, load_raster
from cadelta.segmenter import segment_chromatic
from cadelta.synth import synth_scene, write_scene


def test_deterministic_per_seed():
    a = synth_scene(seed=5, width=200, height=150, n_buildings=5)
    b = synth_scene(seed=5, width=200, height=150, n_buildings=5)
    assert np.array_equal(a.image.samples, b.image.samples)
    assert a.buildings == b.buildings
    assert a.removed == b.removed
    c = synth_scene(seed=6, width=200, height=150, n_buildings=5)
    assert not np.array_equal(a.image.samples, c.image.samples)


def test_truth_matches_rectangles():
    scene = synth_scene(seed=1, width=240, height=180, n_buildings=6, n_removed=2)
    truth = np.asarray(scene.truth.labels)
    paint = np.zeros_like(truth)
    for x0, y0, x1, y1, cls in scene.buildings:
        paint[y0:y1, x0:x1] = cls
    assert np.array_equal(truth, paint)
    assert len(scene.removed) == 2
    present = np.asarray(scene.present_mask.labels)
    for i, (x0, y0, x1, y1, _) in enumerate(scene.buildings):
        cx = (x0 + x1) // 2 + 2  # the present layer is shifted
        cy = (y0 + y1) // 2 + 1
        if i in scene.removed:
            assert present[cy, cx] == 0
        else:
            assert present[cy, cx] == 1


def test_buildings_stay_apart():
    scene = synth_scene(seed=2, width=400, height=300, n_buildings=10)
    assert len(scene.buildings) == 10
    for i, (ax0, ay0, ax1, ay1, _) in enumerate(scene.buildings):
        for bx0, by0, bx1, by1, _ in scene.buildings[i + 1:]:
            separated = (ax1 + 24 <= bx0 or bx1 + 24 <= ax0
                         or ay1 + 24 <= by0 or by1 + 24 <= ay0)
            assert separated


def test_chromatic_segmentation_recovers_truth_well():
    scene = synth_scene(seed=3, width=400, height=300, n_buildings=10)
    mask = segment_chromatic(scene.image)
    report = evaluate(scene.truth, mask, class_table=(0, 1, 2))
    assert report.macro_iou >= 0.95


def test_write_scene_round_trip(tmp_path):
    scene = synth_scene(seed=4, width=240, height=160, n_buildings=3, n_removed=1,
                        min_side=16, max_side=24)
    info = write_scene(scene, tmp_path)
    assert info["buildings"] == 3
    img = load_raster(tmp_path / "image.png")
    assert np.array_equal(img.samples, scene.image.samples)
    assert img.geo.transform == scene.image.geo.transform
    truth = load_mask(tmp_path / "truth.png")
    assert np.array_equal(truth.labels, scene.truth.labels)
    present = load_mask(tmp_path / "present.png", class_table=(0, 1))
    assert np.array_equal(present.labels, scene.present_mask.labels)
