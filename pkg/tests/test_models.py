import os
import sys
import unittest

from pydantic import ValidationError

# Add the parent directory to the path so we can import the package
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from epidemic_lln.models import ExperimentConfig, LimitParams, ModelParams, WeightDistribution
from epidemic_lln.weights import make_distribution


class TestModels(unittest.TestCase):
    def setUp(self):
        self.dist = make_distribution([(1, 0.5), (2, 0.5)])

    def test_weight_distribution_validation(self):
        """Atoms must be sorted, positive-mass and normalised."""
        dist = WeightDistribution(q=(1.0, 2.0), mu=(0.5, 0.5), m1=2.0)
        self.assertEqual(dist.K, 2)
        with self.assertRaises(ValidationError):
            WeightDistribution(q=(2.0, 1.0), mu=(0.5, 0.5), m1=2.0)
        with self.assertRaises(ValidationError):
            WeightDistribution(q=(1.0,), mu=(0.9,), m1=1.0)
        with self.assertRaises(ValidationError):
            WeightDistribution(q=(1.0, 3.0), mu=(0.5, 0.5), m1=2.0)
        with self.assertRaises(ValidationError):
            WeightDistribution(q=(1.0,), mu=(0.5, 0.5), m1=1.0)

    def test_weight_distribution_is_frozen(self):
        with self.assertRaises(ValidationError):
            self.dist.m1 = 5.0

    def test_model_params(self):
        """The infection rate is accepted as 'lambda' or 'lam'."""
        params = ModelParams(n=10, p=0.1, theta=0.2, **{"lambda": 3.0})
        self.assertEqual(params.lam, 3.0)
        self.assertEqual(ModelParams(n=10, p=0.1, lam=3.0, theta=0.2), params)
        self.assertEqual(params.model_dump(by_alias=True)["lambda"], 3.0)

    def test_model_params_ranges(self):
        ModelParams(n=1, p=1.0, lam=1.0, theta=0.5)
        bad = [
            dict(n=0, p=0.1, lam=1.0, theta=0.5),
            dict(n=5, p=0.0, lam=1.0, theta=0.5),
            dict(n=5, p=1.5, lam=1.0, theta=0.5),
            dict(n=5, p=0.1, lam=0.0, theta=0.5),
            dict(n=5, p=0.1, lam=1.0, theta=0.0),
            dict(n=5, p=0.1, lam=1.0, theta=1.0),
        ]
        for kwargs in bad:
            with self.subTest(kwargs=kwargs):
                with self.assertRaises(ValidationError):
                    ModelParams(**kwargs)

    def test_theta_message(self):
        with self.assertRaises(ValidationError) as ctx:
            ModelParams(n=5, p=0.1, lam=1.0, theta=0.0)
        self.assertIn("theta must lie strictly in (0,1)", str(ctx.exception))

    def test_limit_params_rate(self):
        lp = LimitParams(dist=self.dist, theta=0.2, p=0.5, lam=2.0)
        self.assertEqual(lp.rate, 1.0)

    def test_experiment_config_defaults(self):
        cfg = ExperimentConfig(dist=self.dist, theta=0.2, p=0.1, lam=3.0, n_list=[100], obs_times=[0.0, 1.0])
        self.assertEqual(cfg.replicates, 1)
        self.assertEqual(cfg.tol, 1e-9)
        self.assertFalse(cfg.fixed_graph)
        self.assertEqual(cfg.m_list, [1, 4, 16])
        self.assertEqual(cfg.model_params(100).n, 100)
        self.assertEqual(cfg.limit_params(5.0).lam, 5.0)
        self.assertEqual(cfg.limit_params().lam, 3.0)

    def test_experiment_config_invariants(self):
        base = dict(dist=self.dist, theta=0.2, p=0.1, lam=3.0, n_list=[100, 200], obs_times=[0.0, 1.0])
        cases = {
            "n_list must be strictly increasing": dict(n_list=[200, 100]),
            "n_list must not be empty": dict(n_list=[]),
            "replicates must be >= 1": dict(replicates=0),
            "obs_times must be strictly increasing": dict(obs_times=[1.0, 0.5]),
            "tol must be > 0": dict(tol=0.0),
            "sandwich_high must exceed 1/min(m_list)": dict(sandwich_low=0.0, sandwich_high=0.9, m_list=[1, 4]),
        }
        for message, update in cases.items():
            with self.subTest(message=message):
                with self.assertRaises(ValidationError) as ctx:
                    ExperimentConfig(**{**base, **update})
                self.assertIn(message, str(ctx.exception))

    def test_sandwich_high_boundary(self):
        base = dict(dist=self.dist, theta=0.2, p=0.1, lam=3.0, n_list=[100], obs_times=[0.0])
        with self.assertRaises(ValidationError):
            ExperimentConfig(**base, sandwich_high=0.25, m_list=[4, 16])
        cfg = ExperimentConfig(**base, sandwich_high=0.3, m_list=[4, 16])
        self.assertEqual(cfg.sandwich_high, 0.3)

    def test_summary_echo(self):
        cfg = ExperimentConfig(dist=self.dist, theta=0.2, p=0.1, lam=3.0, n_list=[100], obs_times=[0.0])
        summary = cfg.to_summary()
        self.assertEqual(summary["dist"], "1:0.5, 2:0.5")
        self.assertEqual(summary["lambda"], 3.0)
        self.assertNotIn("lam", summary)


if __name__ == '__main__':
    unittest.main()
