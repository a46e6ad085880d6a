"""scikit-learn style wrappers: an encoder transformer and two estimators.

``X`` is a ``ReplicateSet`` or a list of them; predictions are ``(n, p)``.
The neural estimator is fitted by simulation, so ``fit`` ignores ``X``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .censoring import CensoringScheme, censor_encode, preset_scheme
from .exceptions import InvalidArgument, InvalidData
from .harness import template_spec
from .io import load_weights, save_weights
from .likelihood import CplConfig, cpl_fit
from .network import Architecture
from .processes import ReplicateSet, canonical_family, marginal_transform
from .spatial import grid_preset
from .training import PriorSpec, TrainConfig, estimate, train

__all__ = ["CensoringEncoder", "NeuralBayesEstimator", "PairwiseLikelihoodEstimator",
           "check_replicate_sets"]


def check_replicate_sets(X) -> list:
    """Validate ``X`` as one replicate set or a non-empty sequence of them."""
    if isinstance(X, ReplicateSet):
        sets = [X]
    else:
        try:
            sets = list(X)
        except TypeError:
            raise InvalidArgument("X must be a ReplicateSet or a sequence of them") from None
    if not sets:
        raise InvalidArgument("X is empty")
    for s in sets:
        if not isinstance(s, ReplicateSet):
            raise InvalidArgument(f"expected ReplicateSet, got {type(s).__name__}")
        if not np.all(np.isfinite(s.data)):
            raise InvalidData("replicate set contains non-finite values")
    return sets


def _resolve_scheme(family, tau, margin, c_policy) -> CensoringScheme:
    base = preset_scheme(family, tau)
    return CensoringScheme(tau, margin or base.margin, c_policy or base.c_policy)


class CensoringEncoder(TransformerMixin, BaseEstimator):
    """Standardize margins and censor below the ``tau``-quantile.

    ``transform`` returns a list of ``CensoredTensor``.
    """

    def __init__(self, tau=0.9, margin="exponential", c_policy="zero"):
        self.tau = tau
        self.margin = margin
        self.c_policy = c_policy

    def fit(self, X=None, y=None):
        self.scheme_ = CensoringScheme(self.tau, self.margin, self.c_policy)
        return self

    def transform(self, X):
        check_is_fitted(self, "scheme_")
        out = []
        for s in check_replicate_sets(X):
            if s.margin is not self.scheme_.margin:
                s = marginal_transform(s, self.scheme_.margin)
            out.append(censor_encode(s, self.scheme_))
        return out


class NeuralBayesEstimator(BaseEstimator):
    """Censoring-aware neural Bayes estimator trained by simulation.

    Parameters
    ----------
    family : str
        Process family (aliases accepted).
    grid : str
        Grid preset name.
    tau : float
        Censoring level (used for ``tau_mode='fixed'`` and as the default at
        prediction time).
    tau_mode : {'fixed', 'random', 'sequence'}
    K, m_ladder, max_epochs, patience, lr, batch_size, refresh_period, loss
        Training settings, see ``TrainConfig``.
    channels : {1, 2}
        2 feeds the censoring indicator as a second image channel.
    prior : PriorSpec or None
        Defaults to the simulation-study prior of ``family``.
    margin, c_policy : str or None
        Override the family's default censoring scheme.
    architecture : Architecture or None
    seed : int
    """

    def __init__(self, family="gp", grid="g8", tau=0.9, tau_mode="fixed",
                 tau_range=(0.85, 0.95), K=5000, m_ladder=(10, 50), max_epochs=30,
                 patience=10, lr=1e-3, batch_size=32, refresh_period=None, loss="absolute",
                 channels=2, prior=None, margin=None, c_policy=None, architecture=None,
                 seed=0):
        self.family = family
        self.grid = grid
        self.tau = tau
        self.tau_mode = tau_mode
        self.tau_range = tau_range
        self.K = K
        self.m_ladder = m_ladder
        self.max_epochs = max_epochs
        self.patience = patience
        self.lr = lr
        self.batch_size = batch_size
        self.refresh_period = refresh_period
        self.loss = loss
        self.channels = channels
        self.prior = prior
        self.margin = margin
        self.c_policy = c_policy
        self.architecture = architecture
        self.seed = seed

    def _setup(self):
        family = canonical_family(self.family)
        prior = self.prior or PriorSpec.simulation_study(family)
        return family, prior, _resolve_scheme(family, self.tau, self.margin, self.c_policy)

    def fit(self, X=None, y=None, verbose=False):
        """Train on simulated data; ``X`` and ``y`` are ignored."""
        family, prior, scheme = self._setup()
        template = template_spec(family, grid_preset(self.grid), prior)
        config = TrainConfig(
            prior, K=self.K, m_ladder=tuple(self.m_ladder), loss=self.loss,
            tau_mode=self.tau_mode, tau=self.tau, tau_range=tuple(self.tau_range),
            refresh_period=self.refresh_period, lr=self.lr, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience, channels=self.channels,
            seed=self.seed, architecture=self.architecture,
        )
        result = train(config, template, scheme, verbose=verbose)
        self.weights_, self.log_ = result.weights, result.log
        self.scheme_, self.prior_ = scheme, prior
        self.n_features_out_ = prior.p
        return self

    def predict(self, X, tau=None):
        """Estimates ``(n, p)``, truncated to the prior box."""
        check_is_fitted(self, "weights_")
        scheme = self.scheme_ if tau is None else self.scheme_.with_tau(tau)
        return np.array([estimate(self.weights_, s, scheme, self.prior_)[0]
                         for s in check_replicate_sets(X)])

    def save(self, path):
        check_is_fitted(self, "weights_")
        save_weights(self.weights_, path)

    @classmethod
    def load(cls, path, arch: Architecture | None = None) -> "NeuralBayesEstimator":
        """Rebuild a fitted estimator from a checkpoint."""
        w = load_weights(path, arch)
        meta = w.metadata
        sch = meta.get("scheme", {})
        est = cls(family=meta.get("family", "gp"), tau=sch.get("tau", 0.9),
                  tau_mode=meta.get("tau_mode", "fixed"), margin=sch.get("margin"),
                  c_policy=sch.get("c_policy"), channels=w.arch.in_channels,
                  prior=PriorSpec.from_dict(meta["prior"]) if "prior" in meta else None)
        _, est.prior_, est.scheme_ = est._setup()
        est.weights_, est.log_ = w, []
        est.n_features_out_ = w.arch.p
        return est


class PairwiseLikelihoodEstimator(BaseEstimator):
    """Censored pairwise-likelihood estimator with distance cutoff ``h_max``."""

    def __init__(self, family="gp", tau=0.9, h_max=3.0, prior=None, n_restarts=4,
                 max_iter=500, seed=0):
        self.family = family
        self.tau = tau
        self.h_max = h_max
        self.prior = prior
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.seed = seed

    def fit(self, X=None, y=None):
        family = canonical_family(self.family)
        prior = self.prior or PriorSpec.simulation_study(family)
        self.config_ = CplConfig(family, self.tau, prior, h_max=self.h_max,
                                 n_restarts=self.n_restarts, max_iter=self.max_iter,
                                 seed=self.seed)
        return self

    def predict(self, X):
        check_is_fitted(self, "config_")
        self.fit_seconds_ = []
        out = []
        for s in check_replicate_sets(X):
            fit = cpl_fit(s, self.config_)
            out.append(fit.theta)
            self.fit_seconds_.append(fit.seconds)
        return np.array(out)
