"""scikit-learn style wrapper around per-sequence retargeting."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ContractError, ShapeError
from .optimizer import OptimizerConfig, compose_motion, optimize_sequence
from .semantic_loss import PRESETS, LossWeights
from .skeleton import Motion, character_height
from .validation import check_motion


class MotionRetargeter(BaseEstimator, TransformerMixin):
    """
    Retarget motions of ``source_character`` onto ``target_character``.

    ``fit`` optimizes a per-frame, per-joint residual rotation for one
    source motion; ``transform`` composes the fitted residual onto a motion
    with the same frame and joint counts. ``fit_transform`` returns the
    optimized motion itself.

    Parameters
    ----------
    source_character, target_character : SkinnedCharacter
        Rigged meshes sharing a joint layout.
    preset : {"final", "curv"}
        Named loss weighting; ``weights`` overrides individual terms.
    weights : dict or LossWeights, optional
    learning_rate, n_iter, tol : float, int, float
        Adam step size, iteration budget and relative stopping tolerance.
    n_query, n_reference : int
        Per-limb surface sample counts for the penetration term.
    refresh_every : int
        Iterations between nearest-neighbour correspondence refreshes.
    seed : int
        Seed of the surface sampling.
    method : {"tree", "brute"}
        Nearest-neighbour search backend.
    workers : int
        Threads used by tree queries.
    """

    def __init__(
        self,
        source_character=None,
        target_character=None,
        preset="final",
        weights=None,
        learning_rate=5e-3,
        n_iter=300,
        tol=1e-9,
        n_query=400,
        n_reference=4000,
        refresh_every=1,
        seed=0,
        method="tree",
        workers=1,
    ):
        self.source_character = source_character
        self.target_character = target_character
        self.preset = preset
        self.weights = weights
        self.learning_rate = learning_rate
        self.n_iter = n_iter
        self.tol = tol
        self.n_query = n_query
        self.n_reference = n_reference
        self.refresh_every = refresh_every
        self.seed = seed
        self.method = method
        self.workers = workers

    def _config(self):
        if self.preset not in PRESETS:
            raise ContractError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        w = PRESETS[self.preset].as_dict()
        if isinstance(self.weights, LossWeights):
            w = self.weights.as_dict()
        elif self.weights:
            w.update(self.weights)
        return OptimizerConfig(
            learning_rate=self.learning_rate,
            n_iter=self.n_iter,
            tol=self.tol,
            n_query=self.n_query,
            n_reference=self.n_reference,
            refresh_every=self.refresh_every,
            seed=self.seed,
            method=self.method,
            workers=self.workers,
            weights=LossWeights(**w),
        )

    def _check_characters(self):
        if self.source_character is None or self.target_character is None:
            raise ContractError("source_character and target_character must be set")

    def fit(self, X, y=None):
        """Optimize the residual for motion ``X``; ``y`` is ignored."""
        self._check_characters()
        if not isinstance(X, Motion):
            raise ContractError("X must be a Motion")
        report = optimize_sequence(X, self.source_character, self.target_character, self._config())
        self.report_ = report
        self.residual_ = report.residual
        self.motion_ = report.motion
        self.n_iter_ = len(report.trace)
        self.loss_curve_ = np.array([e["total"] for e in report.trace])
        return self

    def transform(self, X):
        """Compose the fitted residual onto motion ``X``."""
        check_is_fitted(self, "residual_")
        if not isinstance(X, Motion):
            raise ContractError("X must be a Motion")
        check_motion(X, self.source_character.skeleton)
        if X.rotations.shape != self.residual_.shape:
            raise ShapeError(
                f"motion has shape {X.rotations.shape[:2]}, fitted residual has {self.residual_.shape[:2]}"
            )
        return compose_motion(
            self.residual_,
            X,
            character_height(self.source_character.skeleton),
            character_height(self.target_character.skeleton),
        )

    def fit_transform(self, X, y=None):
        return self.fit(X, y).motion_
