"""scikit-learn style wrappers around the training and evaluation pipeline.

These estimators exist so the embedding plays nicely with the wider
ecosystem (clone, get_params, Pipeline). They are thin: all the actual work
lives in the functional modules.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .data import dataset_from_arrays
from .evaluation import (
    OuterClassifierConfig,
    classifier_scores,
    genuine_impostor_distances,
    roc_auc,
    train_outer_classifier,
)
from .training import TrainConfig, adapt, train_source
from .validation import check_feature_matrix, check_is_fitted, check_labels


class TripletEmbedder(TransformerMixin, BaseEstimator):
    """Margin-based embedding learned from labeled vectors.

    Parameters mirror the training configuration; ``fit(X, y)`` trains the
    net on identity labels ``y`` and ``transform(X)`` maps features to
    embeddings. ``score(X, y)`` is the verification AUC over all pairs.
    """

    def __init__(
        self,
        hidden_dims=(32, 16),
        normalize_output=True,
        persons_per_batch=5,
        images_per_person=20,
        epochs=40,
        alpha=0.2,
        learning_rate=0.01,
        momentum=0.9,
        seed=0,
    ):
        self.hidden_dims = hidden_dims
        self.normalize_output = normalize_output
        self.persons_per_batch = persons_per_batch
        self.images_per_person = images_per_person
        self.epochs = epochs
        self.alpha = alpha
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.seed = seed

    def _train_config(self, scenario="ls", lambda_=1.0) -> TrainConfig:
        return TrainConfig(
            persons_per_batch=self.persons_per_batch,
            images_per_person=self.images_per_person,
            epochs=self.epochs,
            alpha=self.alpha,
            lambda_=lambda_,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            seed=self.seed,
            scenario=scenario,
            hidden_dims=tuple(self.hidden_dims),
            normalize_output=self.normalize_output,
        )

    def fit(self, X, y):
        X = check_feature_matrix(X)
        labels = check_labels(y, len(X))
        source = dataset_from_arrays(X, labels, domain="source")
        result = train_source(self._train_config(), source)
        self.net_ = result.net
        self.loss_history_ = result.loss_history
        return self

    def transform(self, X):
        check_is_fitted(self, "net_")
        return self.net_.embed(check_feature_matrix(X))

    def score(self, X, y):
        genuine, impostor = genuine_impostor_distances(
            self.transform(X), check_labels(y, len(np.asarray(X)))
        )
        return roc_auc(genuine, impostor)


class DualTripletAdapter(TransformerMixin, BaseEstimator):
    """Embedding adapted to an unlabeled target domain.

    ``fit(X, y, X_target=...)`` pretrains on the labeled source data, then
    adapts by pseudo-labeling target pair distances with source-statistics
    windows and optimizing the combined hinge objective under ``scenario``.
    """

    def __init__(
        self,
        scenario="ls+lt",
        lambda_=1.0,
        epochs=40,
        pretrain_epochs=40,
        hidden_dims=(32, 16),
        normalize_output=True,
        persons_per_batch=5,
        images_per_person=20,
        alpha=0.2,
        learning_rate=0.01,
        momentum=0.9,
        seed=0,
    ):
        self.scenario = scenario
        self.lambda_ = lambda_
        self.epochs = epochs
        self.pretrain_epochs = pretrain_epochs
        self.hidden_dims = hidden_dims
        self.normalize_output = normalize_output
        self.persons_per_batch = persons_per_batch
        self.images_per_person = images_per_person
        self.alpha = alpha
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.seed = seed

    def fit(self, X, y, X_target=None):
        if X_target is None:
            raise ValueError("X_target (unlabeled target features) is required")
        X = check_feature_matrix(X)
        labels = check_labels(y, len(X))
        X_target = check_feature_matrix(X_target, name="X_target")
        if X_target.shape[1] != X.shape[1]:
            raise ValueError("X and X_target feature dims differ")
        source = dataset_from_arrays(X, labels, domain="source")
        target = dataset_from_arrays(X_target, None, domain="target", id_prefix="t")

        base = TrainConfig(
            persons_per_batch=self.persons_per_batch,
            images_per_person=self.images_per_person,
            epochs=self.pretrain_epochs,
            alpha=self.alpha,
            lambda_=self.lambda_,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            seed=self.seed,
            scenario="ls",
            hidden_dims=tuple(self.hidden_dims),
            normalize_output=self.normalize_output,
        )
        pretrained = train_source(base, source)
        self.initial_net_ = pretrained.net

        adapt_cfg = TrainConfig(
            persons_per_batch=self.persons_per_batch,
            images_per_person=self.images_per_person,
            epochs=self.epochs,
            alpha=self.alpha,
            lambda_=self.lambda_,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            seed=self.seed,
            scenario=self.scenario,
            hidden_dims=tuple(self.hidden_dims),
            normalize_output=self.normalize_output,
        )
        result = adapt(adapt_cfg, source, target, pretrained.net)
        self.net_ = result.net
        self.loss_history_ = result.loss_history
        self.diagnostics_ = result.diagnostics
        return self

    def transform(self, X):
        check_is_fitted(self, "net_")
        return self.net_.embed(check_feature_matrix(X))

    def score(self, X, y):
        genuine, impostor = genuine_impostor_distances(
            self.transform(X), check_labels(y, len(np.asarray(X)))
        )
        return roc_auc(genuine, impostor)


class PairVerifier(ClassifierMixin, BaseEstimator):
    """Binary same/different classifier over dissimilarity vectors.

    ``fit(X, y)`` trains the two-layer logistic scorer on vectors |q - t|
    with labels 1 (same identity) / 0 (different); ``predict_proba`` follows
    the sklearn column convention for ``classes_ = [0, 1]``.
    """

    def __init__(self, hidden_dim=None, epochs=200, learning_rate=0.5, momentum=0.9, seed=0):
        self.hidden_dim = hidden_dim
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.seed = seed

    def fit(self, X, y):
        X = check_feature_matrix(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        cfg = OuterClassifierConfig(
            hidden_dim=self.hidden_dim,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            seed=self.seed,
        )
        self.net_ = train_outer_classifier(X, y, cfg)
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "net_")
        return classifier_scores(self.net_, check_feature_matrix(X))

    def predict_proba(self, X):
        scores = self.decision_function(X)
        return np.column_stack([1.0 - scores, scores])

    def predict(self, X):
        return (self.decision_function(X) >= 0.5).astype(np.int64)
