import numpy as np
import pytest

import patchood


def test_npy_round_trip(tmp_path):
    a = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    patchood.write_npy(tmp_path / "a.npy", a)
    b = patchood.read_npy(tmp_path / "a.npy")
    assert b.dtype == np.float32
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(np.load(tmp_path / "a.npy"), a)

    c = np.random.default_rng(0).normal(size=(3, 5))
    np.save(tmp_path / "c.npy", c)
    np.testing.assert_array_equal(patchood.read_npy(tmp_path / "c.npy"), c)


def test_malformed_file_raises(tmp_path):
    (tmp_path / "bad.npy").write_bytes(b"not a tensor")
    with pytest.raises(patchood.PatchoodError, match="MalformedHeader"):
        patchood.read_npy(tmp_path / "bad.npy")


def test_gaussian_matches_numpy(tmp_path):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(400, 6)) @ rng.normal(size=(6, 6))
    model = patchood.fit_gaussian(x)
    np.testing.assert_allclose(model.mu, x.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(model.sigma, np.cov(x, rowvar=False, bias=True), rtol=1e-10, atol=1e-12)
    assert model.epsilon == 0.0

    z = rng.normal(size=(10, 6))
    diff = z - model.mu
    want = np.einsum("ij,ij->i", diff, np.linalg.solve(model.sigma, diff.T).T)
    np.testing.assert_allclose(patchood.mahalanobis(model, z), want, rtol=1e-9)
    assert patchood.mahalanobis(model, model.mu) == pytest.approx(0.0, abs=1e-20)

    patchood.save_model(model, tmp_path / "m.npz")
    back = patchood.load_model(tmp_path / "m.npz")
    np.testing.assert_array_equal(back.sigma, model.sigma)


def test_reduce_and_aggregate():
    v = patchood.reduce_to_vector(np.ones((4, 8, 8, 8)), max_elements=100)
    assert len(v) == 32
    assert patchood.make_grid((8, 8, 8), (4, 4, 4), (2, 2, 2))[-1] == [4, 4, 4]
    f = patchood.make_filter((5, 5, 5))
    assert f.max() == pytest.approx(1.0)
    n = len(patchood.make_grid((6, 6, 6), (4, 4, 4)))
    mask, score = patchood.build_uncertainty_mask((6, 6, 6), (4, 4, 4), np.full(n, 2.5))
    np.testing.assert_allclose(mask, 2.5, rtol=1e-12)
    assert score == pytest.approx(2.5)


def test_baselines_and_metrics():
    p = np.stack([np.full((1, 1, 2), 0.75), np.full((1, 1, 2), 0.25)])
    assert patchood.max_softmax(p)[0, 0, 0] == pytest.approx(0.25)
    assert patchood.kl_uniform(p)[0, 0, 0] == pytest.approx(0.8113, abs=1e-4)
    assert patchood.temp_scaled(np.zeros((2, 1, 1, 1)), 10.0)[0, 0, 0] == pytest.approx(0.5)
    assert patchood.mc_dropout([np.zeros((1, 1, 1)), np.ones((1, 1, 1))])[0, 0, 0] == pytest.approx(0.5)
    assert patchood.tpr_boundary(np.arange(20.0), 0.95) == 18.0
    assert patchood.detection_error(0.886, 0.05) == pytest.approx(0.082)
    assert patchood.esce([0.05, 0.08, 0.62, 0.68], [0.9, 0.7, 0.2, 0.6]) == pytest.approx(0.0925)
    assert patchood.dice(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 1.0


def test_pipeline(tmp_path):
    manifest = patchood.synth(tmp_path / "data", d=8, n_train=60, n_val=20, n_test=20, n_ood=20, mean_shift=5.0, seed=4)
    summary = patchood.fit(manifest, tmp_path / "out" / "model.npz")
    assert summary["d"] == 8 and summary["n_samples"] == 240
    scores, failures = patchood.score(manifest, tmp_path / "out", model=tmp_path / "out" / "model.npz", workers=2)
    assert not failures and len(scores) == 60
    report = patchood.evaluate(manifest, tmp_path / "out")
    assert report["fpr"] <= 0.1
    assert report["n_test"] == 20 and report["n_ood"] == 20
    with pytest.raises(patchood.PatchoodError, match="MissingScores"):
        patchood.evaluate(manifest, tmp_path / "out", method="max_softmax")
