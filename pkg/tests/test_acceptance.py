"""
Long-running convergence studies at the reference sizes.

Skipped unless EPIDEMIC_LLN_SLOW=1. EPIDEMIC_LLN_WORKERS sets the process
count (default 1).
"""
import os
import sys
import unittest

import numpy as np

# Add the parent directory to the path so we can import the package
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import tests.test_sim as sim_tests
from epidemic_lln.harness import (
    apply_overrides, beta_study, corollary_check, lemma1_check, lln_experiment, load_preset, sandwich_experiment,
)
from epidemic_lln.limit import classical_limit

SLOW = os.environ.get("EPIDEMIC_LLN_SLOW") == "1"
WORKERS = int(os.environ.get("EPIDEMIC_LLN_WORKERS") or 1)


def reference(**overrides):
    return apply_overrides(load_preset("reference"), workers=WORKERS, master_seed=20240101, **overrides)


def strictly_decreasing(values):
    return all(b < a for a, b in zip(values, values[1:]))


@unittest.skipUnless(SLOW, "set EPIDEMIC_LLN_SLOW=1 to run acceptance studies")
class TestLargeSampleExactness(sim_tests.TestSmallInstanceExactness):
    REPLICATES = 100_000


@unittest.skipUnless(SLOW, "set EPIDEMIC_LLN_SLOW=1 to run acceptance studies")
class TestReferenceConvergence(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.cfg = reference()

    def test_mean_error_shrinks_with_n(self):
        frame = lln_experiment(self.cfg)["converge"]
        frame = frame[frame["t"] > 0.0]
        worst = frame.assign(err=frame[["err_S", "err_V"]].max(axis=1)).groupby("n")["err"].max()
        self.assertEqual(list(worst.index), [500, 2000, 8000])
        self.assertTrue(strictly_decreasing(list(worst)), msg=str(worst))
        self.assertLessEqual(worst.loc[8000], 0.02)

    def test_cross_edge_discrepancy_shrinks_with_n(self):
        # the reference grid ends at t = 2, so the per-n sup over obs_times is the sup over t <= 2
        worst = corollary_check(self.cfg)["corollary_summary"].set_index("n")["sup_mean_discrepancy"]
        self.assertTrue(strictly_decreasing(list(worst)), msg=str(worst))
        self.assertLessEqual(worst.loc[8000], 0.005)

    def test_class_lower_bounds_hold(self):
        cfg = apply_overrides(self.cfg, n_list=[8000])
        frame = lemma1_check(cfg, t=1.0)["lemma1"]
        at_one = frame[np.isclose(frame["t"], 1.0)]
        self.assertEqual(len(at_one), cfg.dist.K)
        self.assertTrue((at_one["frac_S"] >= 0.95).all(), msg=at_one.to_string())
        self.assertTrue((at_one["frac_I"] >= 0.95).all(), msg=at_one.to_string())

    def test_beta_trend(self):
        frame = beta_study(self.cfg)["beta"]
        self.assertTrue(strictly_decreasing(list(frame["beta_over_n2"])), msg=frame.to_string())


@unittest.skipUnless(SLOW, "set EPIDEMIC_LLN_SLOW=1 to run acceptance studies")
class TestSandwich(unittest.TestCase):
    def test_orderings_and_gap(self):
        cfg = reference(obs_times=[0.0, 1.0])
        frame = sandwich_experiment(cfg, m_list=[1, 4, 16], n=4000)["sandwich"]
        at_one = frame[frame["t"] == 1.0].set_index("m")
        self.assertTrue((at_one["ordered_S"] == 1).all(), msg=at_one.to_string())
        self.assertTrue((at_one["ordered_V"] == 1).all(), msg=at_one.to_string())
        self.assertLess(at_one.loc[16, "gap_S"], at_one.loc[1, "gap_S"])


@unittest.skipUnless(SLOW, "set EPIDEMIC_LLN_SLOW=1 to run acceptance studies")
class TestClassicalFixture(unittest.TestCase):
    def test_mean_follows_classical_ode(self):
        # the all-edges graph is stored explicitly, so n stays at a size whose edge arrays fit in memory
        cfg = apply_overrides(load_preset("classical"), n_list=[2000], replicates=20, obs_times=[0.0, 1.0],
                              workers=WORKERS)
        frame = lln_experiment(cfg)["converge"]
        s = classical_limit(cfg.theta, cfg.lam, 1.0, times=[0.0, 1.0]).s
        self.assertLess(abs(frame["mean_S"].iloc[-1] - s[-1]), 0.02)


if __name__ == '__main__':
    unittest.main()
