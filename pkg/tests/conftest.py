"""Shared desk-scale fixtures.

Trained estimators are expensive (minutes each), so they are built lazily
once per session. Set ``CNBE_DESK_CACHE`` to a directory to reuse
checkpoints across sessions; the cache key covers every training setting.
"""

import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from censored_nbe.censoring import preset_scheme  # noqa: E402
from censored_nbe.harness import evaluate_risk, make_test_set, nbe_handle, template_spec  # noqa: E402
from censored_nbe.io import load_weights, save_weights  # noqa: E402
from censored_nbe.spatial import grid_preset, make_rng  # noqa: E402
from censored_nbe.training import PriorSpec, TrainConfig, train  # noqa: E402

DESK_SEED = 2024
DESK = dict(K=5000, m_ladder=(10, 50), max_epochs=30, patience=10, seed=DESK_SEED)
N_TEST, M_TEST, TAU = 200, 50, 0.9


class DeskStudy:
    """GP on the 8 x 8 grid: four estimators sharing one test set."""

    def __init__(self):
        self.family = "gp"
        self.prior = PriorSpec.simulation_study("gp")
        self.template = template_spec("gp", grid_preset("g8"), self.prior)
        self.names = list(self.template.param_names)
        self.scheme = preset_scheme("gp", TAU)
        self.test_set = make_test_set(self.template, self.prior, N_TEST, M_TEST, TAU,
                                      make_rng([DESK_SEED, 1]))
        # test level for the variable-tau comparison, drawn once
        self.tau_star = float(make_rng([DESK_SEED, 2]).uniform(0.85, 0.95))
        self.test_set_star = [replace(c, tau=self.tau_star) for c in self.test_set]
        self._models = {}
        self._reports = {}

    def config(self, name) -> TrainConfig:
        kw = dict(DESK)
        if name == "w1":
            kw["channels"] = 1
        elif name == "tau_random":
            kw.update(tau_mode="random", refresh_period=1)
        elif name == "tau_fixed_star":
            kw["tau"] = self.tau_star
        elif name != "w2":
            raise KeyError(name)
        return TrainConfig(self.prior, **kw)

    def scheme_for(self, name):
        return self.scheme.with_tau(self.tau_star) if name == "tau_fixed_star" else self.scheme

    def model(self, name):
        if name not in self._models:
            cfg = self.config(name)
            cache = os.environ.get("CNBE_DESK_CACHE")
            path = None
            if cache:
                key = json.dumps([name, repr(cfg), self.tau_star], sort_keys=True)
                digest = hashlib.sha256(key.encode()).hexdigest()[:16]
                path = Path(cache) / f"{name}-{digest}.ckpt"
            if path is not None and path.is_file():
                self._models[name] = load_weights(path)
            else:
                w = train(cfg, self.template, self.scheme_for(name)).weights
                if path is not None:
                    path.parent.mkdir(parents=True, exist_ok=True)
                    save_weights(w, path)
                self._models[name] = w
        return self._models[name]

    def report(self, name, test="base"):
        key = (name, test)
        if key not in self._reports:
            cases = self.test_set if test == "base" else self.test_set_star
            handle = nbe_handle(self.model(name), self.scheme_for(name), self.prior)
            self._reports[key] = evaluate_risk(handle, cases, name, self.family, self.names)
        return self._reports[key]


@pytest.fixture(scope="session")
def desk():
    return DeskStudy()


# ---------------------------------------------------------------- acceptance log

_RESULTS = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return _RESULTS


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_RESULTS):
        ok, title, detail = _RESULTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  [{n:2d}] {title}: {detail}")
