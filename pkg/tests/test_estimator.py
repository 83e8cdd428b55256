import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from skinretarget import MotionRetargeter
from skinretarget.exceptions import ContractError, ShapeError


def small(src, tgt, **kw):
    params = dict(n_iter=5, n_query=30, n_reference=200, refresh_every=5)
    params.update(kw)
    return MotionRetargeter(src, tgt, **params)


def test_get_params_and_clone(slim_to_fat_scene):
    src, _, tgt = slim_to_fat_scene
    est = small(src, tgt, preset="curv")
    params = est.get_params()
    assert params["preset"] == "curv" and params["n_iter"] == 5
    twin = clone(est)
    assert twin.get_params()["n_query"] == 30 and twin is not est
    est.set_params(learning_rate=0.02)
    assert est.learning_rate == 0.02


def test_transform_before_fit(slim_to_fat_scene):
    src, motion, tgt = slim_to_fat_scene
    with pytest.raises(NotFittedError):
        small(src, tgt).transform(motion)


def test_fit_transform_and_transform_agree(slim_to_fat_scene):
    src, motion, tgt = slim_to_fat_scene
    est = small(src, tgt)
    out = est.fit_transform(motion)
    assert out.rotations.shape == motion.rotations.shape
    assert est.n_iter_ == len(est.loss_curve_) >= 1
    again = est.transform(motion)
    assert np.allclose(again.rotations, out.rotations, atol=1e-12)
    assert np.allclose(again.globals, out.globals, atol=1e-12)


def test_errors(slim_to_fat_scene):
    src, motion, tgt = slim_to_fat_scene
    with pytest.raises(ContractError):
        small(src, tgt, preset="fast").fit(motion)
    with pytest.raises(ContractError):
        MotionRetargeter().fit(motion)
    with pytest.raises(ContractError):
        small(src, tgt).fit(motion.rotations)
    est = small(src, tgt).fit(motion)
    shorter = motion.replace(rotations=motion.rotations[:4], globals=motion.globals[:4])
    with pytest.raises(ShapeError):
        est.transform(shorter)


def test_weight_override(slim_to_fat_scene):
    src, _, tgt = slim_to_fat_scene
    cfg = small(src, tgt, weights={"lp": 0.0})._config()
    assert cfg.weights.lp == 0.0 and cfg.weights.tc == 1.0
