import numpy as np
import pytest

from crowdcdro.core import AnnotationDataset
from crowdcdro.pseudo import likelihood_ratio_assign, select_pseudo_labels


def dataset_of(n):
    return AnnotationDataset(
        features=np.zeros((n, 2)),
        annotations=np.column_stack([np.arange(n), np.zeros(n, int), np.zeros(n, int)]),
        num_classes=3,
        num_annotators=1,
    )


class TestLikelihoodRatioAssign:
    def test_clear_winner(self):
        label, ratio = likelihood_ratio_assign([0.8, 0.15, 0.05], 2.0)
        assert label == 0
        assert ratio == pytest.approx(0.8 / 0.15)

    def test_abstains_below_threshold(self):
        assert likelihood_ratio_assign([0.5, 0.45, 0.05], 2.0) is None

    def test_point_mass_uses_floor(self):
        label, ratio = likelihood_ratio_assign([1.0, 0.0, 0.0], 100.0)
        assert label == 0
        assert ratio >= 1e11

    def test_exact_tie_abstains(self):
        assert likelihood_ratio_assign([0.4, 0.4, 0.2], 1.5) is None

    def test_threshold_must_exceed_one(self):
        with pytest.raises(ValueError):
            likelihood_ratio_assign([0.9, 0.1], 1.0)


class TestSelectPseudoLabels:
    def test_point_masses_full_coverage(self):
        ds = dataset_of(4)
        posts = np.eye(3)[[0, 1, 2, 0]]
        out = select_pseudo_labels(ds, posts, 2.0)
        assert out.coverage == 1.0
        assert np.array_equal(out.labels, [0, 1, 2, 0])

    def test_uniform_posteriors_abstain(self):
        ds = dataset_of(5)
        posts = np.full((5, 3), 1 / 3)
        out = select_pseudo_labels(ds, posts, 1.01)
        assert out.coverage == 0.0
        assert len(out) == 0

    def test_mixed_coverage(self):
        ds = dataset_of(5)
        posts = np.array(
            [
                [0.8, 0.1, 0.1],
                [0.5, 0.4, 0.1],
                [0.1, 0.7, 0.2],
                [0.34, 0.33, 0.33],
                [0.05, 0.15, 0.8],
            ]
        )
        out = select_pseudo_labels(ds, posts, 2.0)
        assert out.coverage == pytest.approx(0.6)
        assert np.array_equal(out.indices, [0, 2, 4])
        assert np.array_equal(out.labels, [0, 1, 2])

    def test_matches_per_point_rule(self):
        rng = np.random.default_rng(3)
        ds = dataset_of(40)
        posts = rng.dirichlet(np.ones(3), size=40)
        for thr in (1.2, 2.0, 5.0):
            out = select_pseudo_labels(ds, posts, thr)
            expected = {}
            for i in range(40):
                got = likelihood_ratio_assign(posts[i], thr)
                if got is not None:
                    expected[i] = got[0]
            assert {e[0]: e[1] for e in out.entries} == expected

    def test_coverage_nonincreasing_in_threshold(self):
        rng = np.random.default_rng(4)
        ds = dataset_of(200)
        posts = rng.dirichlet(np.ones(3) * 0.7, size=200)
        coverages = [
            select_pseudo_labels(ds, posts, thr).coverage
            for thr in (1.1, 1.5, 2.0, 4.0, 10.0, 50.0)
        ]
        assert np.all(np.diff(coverages) <= 1e-12)

    def test_determinism(self):
        rng = np.random.default_rng(5)
        ds = dataset_of(50)
        posts = rng.dirichlet(np.ones(3), size=50)
        first = select_pseudo_labels(ds, posts, 2.5)
        second = select_pseudo_labels(ds, posts, 2.5)
        assert first == second

    def test_misaligned_posteriors_rejected(self):
        ds = dataset_of(4)
        with pytest.raises(ValueError):
            select_pseudo_labels(ds, np.full((3, 3), 1 / 3), 2.0)
