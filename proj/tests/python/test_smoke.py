import numpy as np
import pytest

import voxelprior as vp


def test_categories():
    assert vp.base_categories() == ["box", "table", "chair", "tower", "cross"]
    assert len(vp.novel_categories()) == 5


def test_shape_render_iou():
    grid = vp.generate_shape("box", dim=16, seed=3)
    assert grid.shape == (16, 16, 16)
    assert set(np.unique(grid)) <= {0.0, 1.0}
    assert vp.iou(grid, grid) == 1.0
    image = vp.render(grid, 30.0, 20.0, size=32)
    assert image.shape == (3, 32, 32)
    assert image.max() <= 1.0 and image.max() > 0.0
    np.testing.assert_array_equal(image[0], image[1])


def test_iou_matches_numpy():
    rng = np.random.default_rng(0)
    for _ in range(20):
        pred = rng.random((8, 8, 8))
        target = (rng.random((8, 8, 8)) < 0.5).astype(float)
        p = pred >= 0.4
        t = target >= 0.5
        expected = (p & t).sum() / (p | t).sum()
        assert vp.iou(pred, target) == pytest.approx(expected, abs=0)


def test_average_prior_and_bins():
    a = vp.generate_shape("ring", seed=1)
    b = vp.generate_shape("ring", seed=2)
    prior = vp.average_prior([a, b])
    np.testing.assert_array_equal(prior, (a + b) / 2)
    bins = vp.occupancy_bins(vp.average_prior([a, a, a]))
    assert bins["[0.9,1.0]"] == int(a.sum())
    assert bins["[0.6,0.9)"] == 0


def test_bad_input_raises():
    with pytest.raises(ValueError):
        vp.iou(np.zeros((4, 4, 4)), np.zeros((5, 5, 5)))
    with pytest.raises(ValueError):
        vp.generate_shape("teapot")
    with pytest.raises(ValueError):
        vp.render(np.zeros((4, 4, 5)), 0, 0)


def test_dataset_and_model(tmp_path):
    digest = vp.build_dataset(tmp_path, instances=20, views=2, voxel_dim=8, image_size=16,
                              base=["box", "tower"], novel=["ring"])
    data = vp.Dataset(tmp_path)
    assert data.digest == digest
    assert data.categories == ["box", "tower", "ring"]
    assert data.count("box", "train") + data.count("box", "val") + data.count("box", "test") == 20

    image = data.view("ring", "test", 0, 1)
    prior = data.prior("ring", kind="kshot", k=1, seed=5)
    assert image.shape == (3, 16, 16) and prior.shape == (8, 8, 8)

    model = vp.Model("prior_refinement", preset="tiny", seed=1)
    with pytest.raises(ValueError):
        model.predict(image)
    # tiny preset is S=8, D=4; the dataset is S=16, D=8.
    with pytest.raises(ValueError):
        model.predict(image, prior)
    with pytest.raises(ValueError):
        vp.Model("image_only", preset="tiny").predict(image, prior)


def test_train_save_load(tmp_path):
    vp.build_dataset(tmp_path / "data", instances=20, views=2, voxel_dim=8, image_size=16,
                     base=["box", "tower"], novel=["ring"])
    data = vp.Dataset(tmp_path / "data")
    model = vp.Model("prior_refinement", seed=2, image_size=16, voxel_dim=8)
    image = data.view("box", "test", 0)
    prior = data.prior("box", kind="full")
    before = model.predict(image, prior, iterations=2)
    assert before.shape == (8, 8, 8)
    assert ((before > 0) & (before < 1)).all()

    history = model.train(data, max_epochs=2, batch_size=4, seed=1)
    assert len(history["epochs"]) == 2
    assert 0.0 <= history["best_val"] <= 1.0
    assert all("ring" not in p for p in data.io_log())

    model.save(tmp_path / "m.bin")
    again = vp.Model.load(tmp_path / "m.bin")
    assert again.digest == model.digest
    np.testing.assert_array_equal(again.predict(image, prior), model.predict(image, prior))

    twin = vp.Model("prior_refinement", seed=2, image_size=16, voxel_dim=8)
    twin.train(vp.Dataset(tmp_path / "data"), max_epochs=2, batch_size=4, seed=1)
    assert twin.digest == model.digest
