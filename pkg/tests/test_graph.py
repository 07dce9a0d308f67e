import os
import sys
import tempfile
import unittest

import numpy as np

# Add the parent directory to the path so we can import the package
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from epidemic_lln.exceptions import ConfigError, DomainError, PreconditionError
from epidemic_lln.graph import (
    complete_graph, cross_edges, dump_edgelist, estimate_beta, from_edges, generate_er, load_edgelist,
    subset_size,
)


class TestGenerateER(unittest.TestCase):
    def test_single_vertex_has_no_edges(self):
        for p in (0.01, 0.5, 0.99):
            g = generate_er(1, p, seed=1)
            self.assertEqual(g.edge_count, 0)
            self.assertEqual(g.neighbors(0).size, 0)

    def test_domain(self):
        for p in (0.0, 1.0, -0.1, 1.5):
            with self.subTest(p=p):
                with self.assertRaises(DomainError):
                    generate_er(10, p, seed=0)

    def test_two_vertices_edge_frequency(self):
        hits = sum(generate_er(2, 0.5, seed=s).edge_count for s in range(2000))
        # 2000 Bernoulli(1/2) trials, sd ~ 22.4
        self.assertLess(abs(hits - 1000), 4 * 22.4)

    def test_edge_count(self):
        g = generate_er(1000, 0.01, seed=7)
        mean = 0.01 * 1000 * 999 / 2
        sd = np.sqrt(mean * 0.99)
        self.assertLess(abs(g.edge_count - mean), 4 * sd)

    def test_same_seed_same_graph(self):
        a = generate_er(300, 0.05, seed=12)
        b = generate_er(300, 0.05, seed=12)
        np.testing.assert_array_equal(a.indptr, b.indptr)
        np.testing.assert_array_equal(a.indices, b.indices)

    def test_simple_and_symmetric(self):
        for method in ("bernoulli", "skip"):
            with self.subTest(method=method):
                g = generate_er(200, 0.1, seed=4, method=method)
                self.assertEqual(g.p, 0.1)
                self.assertEqual(int(g.degrees.sum()), 2 * g.edge_count)
                for i in range(g.n):
                    nbrs = g.neighbors(i)
                    self.assertNotIn(i, nbrs)
                    self.assertTrue(np.all(np.diff(nbrs) > 0))
                    for j in nbrs[:5]:
                        self.assertTrue(g.has_edge(int(j), i))

    def test_skip_sampler_edge_count(self):
        g = generate_er(2000, 0.005, seed=21, method="skip")
        mean = 0.005 * 2000 * 1999 / 2
        self.assertLess(abs(g.edge_count - mean), 4 * np.sqrt(mean))

    def test_unknown_method(self):
        with self.assertRaises(ValueError):
            generate_er(10, 0.5, seed=0, method="magic")


class TestConstruction(unittest.TestCase):
    def test_from_edges(self):
        g = from_edges(4, [(0, 1), (2, 1), (2, 3)])
        self.assertEqual(g.edge_count, 3)
        np.testing.assert_array_equal(g.neighbors(1), [0, 2])
        u, v = g.edges()
        np.testing.assert_array_equal(u, [0, 1, 2])
        np.testing.assert_array_equal(v, [1, 2, 3])
        self.assertIsNone(g.p)

    def test_from_edges_rejects_bad_lists(self):
        with self.assertRaises(PreconditionError):
            from_edges(3, [(0, 0)])
        with self.assertRaises(PreconditionError):
            from_edges(3, [(0, 1), (1, 0)])
        with self.assertRaises(PreconditionError):
            from_edges(3, [(0, 3)])

    def test_complete_graph(self):
        g = complete_graph(5)
        self.assertEqual(g.edge_count, 10)
        self.assertEqual(g.p, 1.0)
        np.testing.assert_array_equal(g.degrees, [4] * 5)

    def test_gather(self):
        g = from_edges(4, [(0, 1), (1, 2), (2, 3)])
        src, dst = g.gather(np.array([1, 3]))
        np.testing.assert_array_equal(src, [1, 1, 3])
        np.testing.assert_array_equal(dst, [0, 2, 2])
        src, dst = g.gather(np.array([], dtype=np.int64))
        self.assertEqual(src.size, 0)

    def test_edgelist_file(self):
        g = generate_er(50, 0.2, seed=3)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "g.txt")
            dump_edgelist(g, path)
            with open(path) as f:
                header = f.readline().split()
            self.assertEqual(header, ["50", str(g.edge_count)])
            loaded = load_edgelist(path, p=0.2)
        np.testing.assert_array_equal(loaded.indices, g.indices)
        self.assertEqual(loaded.p, 0.2)

    def test_edgelist_errors_carry_line(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "bad.txt")
            with open(path, "w") as f:
                f.write("3 2\n0 1\n2 1\n")
            with self.assertRaises(ConfigError) as ctx:
                load_edgelist(path)
            self.assertEqual(ctx.exception.line, 3)
            with self.assertRaises(ConfigError):
                load_edgelist(os.path.join(tmp, "missing.txt"))


class TestCrossEdges(unittest.TestCase):
    def test_empty_sets(self):
        g = complete_graph(4)
        self.assertEqual(cross_edges(g, [], [1, 2]), 0)
        self.assertEqual(cross_edges(g, [0], []), 0)

    def test_complete_graph(self):
        self.assertEqual(cross_edges(complete_graph(4), {0, 1}, {2, 3}), 4)

    def test_overlap_rejected(self):
        with self.assertRaises(PreconditionError):
            cross_edges(complete_graph(4), [0, 1], [1, 2])

    def test_symmetric(self):
        g = generate_er(100, 0.2, seed=8)
        c, d = list(range(0, 30)), list(range(50, 90))
        self.assertEqual(cross_edges(g, c, d), cross_edges(g, d, c))

    def test_additive_over_disjoint_union(self):
        g = generate_er(120, 0.15, seed=21)
        order = np.random.default_rng(22).permutation(120)
        c, d, e = order[:30], order[30:70], order[70:]
        self.assertEqual(cross_edges(g, c, np.concatenate([d, e])), cross_edges(g, c, d) + cross_edges(g, c, e))

    def test_matches_double_loop(self):
        rng = np.random.default_rng(23)
        for trial in range(20):
            n = int(rng.integers(2, 21))
            g = generate_er(n, 0.4, seed=100 + trial)
            labels = rng.integers(0, 3, size=n)
            c, d = np.flatnonzero(labels == 0), np.flatnonzero(labels == 1)
            expected = sum(1 for i in c for j in d if g.has_edge(int(i), int(j)))
            with self.subTest(n=n, trial=trial):
                self.assertEqual(cross_edges(g, c, d), expected)

    def test_binomial_count(self):
        g = generate_er(1000, 0.1, seed=5)
        count = cross_edges(g, np.arange(100), np.arange(500, 600))
        sd = np.sqrt(1000 * 0.9)
        self.assertLess(abs(count - 1000), 5 * sd)


class TestEstimateBeta(unittest.TestCase):
    def test_no_trials(self):
        self.assertEqual(estimate_beta(generate_er(100, 0.1, seed=1), 0.25, 0.25, 0, seed=2), 0.0)

    def test_complete_graph_is_exact(self):
        self.assertEqual(estimate_beta(complete_graph(4), 0.5, 0.5, 10, seed=1), 0.0)

    def test_sets_too_large(self):
        with self.assertRaises(PreconditionError):
            estimate_beta(complete_graph(4), 0.75, 0.5, 10, seed=1)

    def test_unknown_p(self):
        g = from_edges(4, [(0, 1)])
        with self.assertRaises(PreconditionError):
            estimate_beta(g, 0.25, 0.25, 5, seed=1)
        self.assertGreaterEqual(estimate_beta(g, 0.25, 0.25, 5, seed=1, p=0.5), 0.0)

    def test_monotone_in_trials(self):
        g = generate_er(200, 0.1, seed=6)
        fewer = estimate_beta(g, 0.25, 0.25, 20, seed=9)
        more = estimate_beta(g, 0.25, 0.25, 60, seed=9)
        self.assertGreaterEqual(more, fewer)

    def test_subset_size(self):
        self.assertEqual(subset_size(0.25, 500), 125)
        self.assertEqual(subset_size(0.3, 10), 3)
        self.assertEqual(subset_size(0.25, 7), 2)


if __name__ == '__main__':
    unittest.main()
