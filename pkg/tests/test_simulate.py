import numpy as np
import pytest

from crowdcdro.simulate import (
    AnnotatorSpec,
    annotate,
    annotator_group,
    make_gaussian_dataset,
    parse_preset,
    simplex_means,
)


class TestGaussianDataset:
    def test_deterministic_per_seed(self):
        a = make_gaussian_dataset(500, 4, 3, 2.0, seed=9)
        b = make_gaussian_dataset(500, 4, 3, 2.0, seed=9)
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1], b[1])

    def test_balanced_classes(self):
        _, labels, _ = make_gaussian_dataset(1001, 4, 3, 2.0, seed=0)
        counts = np.bincount(labels)
        assert counts.max() - counts.min() <= 1

    def test_simplex_distances(self):
        means = simplex_means(4, 10, 3.5)
        for i in range(4):
            for j in range(i + 1, 4):
                assert np.linalg.norm(means[i] - means[j]) == pytest.approx(3.5)

    def test_separated_blobs_nearest_mean_accuracy(self):
        # Bayes rule for equal covariance is nearest mean; overlap at
        # separation 4 leaves accuracy near Phi(2) ~ 0.977
        features, labels, means = make_gaussian_dataset(1000, 2, 2, 4.0, seed=1)
        dists = ((features[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        pred = np.argmin(dists, axis=1)
        assert np.mean(pred == labels) >= 0.95

    def test_zero_separation_is_chance(self):
        features, labels, means = make_gaussian_dataset(3000, 3, 3, 0.0, seed=2)
        dists = ((features[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        pred = np.argmin(dists, axis=1)
        assert abs(np.mean(pred == labels) - 1 / 3) <= 0.05

    def test_invalid_dims(self):
        with pytest.raises(ValueError):
            make_gaussian_dataset(2, 4, 3, 1.0, seed=0)
        with pytest.raises(ValueError):
            make_gaussian_dataset(100, 2, 4, 1.0, seed=0)  # d < k - 1


class TestAnnotatorGroups:
    def test_mid_r5_rates(self):
        specs = annotator_group("idn-mid", 5, seed=0)
        assert [s.target_rate for s in specs] == [0.3, 0.3, 0.4, 0.4, 0.5]

    def test_low_r10_rates(self):
        specs = annotator_group("idn-low", 10, seed=0)
        assert [s.target_rate for s in specs] == [0.1] * 4 + [0.2] * 4 + [0.3] * 2

    def test_high_r30_counts(self):
        specs = annotator_group("idn-high", 30, seed=0)
        rates = [s.target_rate for s in specs]
        assert rates.count(0.5) == 11 and rates.count(0.6) == 11 and rates.count(0.7) == 8

    def test_r50_and_r100_sizes(self):
        assert len(annotator_group("idn-low", 50)) == 50
        assert len(annotator_group("idn-mid", 100)) == 100

    def test_unknown_presets_rejected(self):
        with pytest.raises(ValueError):
            annotator_group("idn-extreme", 5)
        with pytest.raises(ValueError):
            annotator_group("idn-low", 7)

    def test_parse_preset(self):
        assert parse_preset("idn-mid-r5") == ("idn-mid", 5)
        assert parse_preset("IDN-HIGH-R30") == ("idn-high", 30)
        with pytest.raises(ValueError):
            parse_preset("mid-5")


class TestAnnotate:
    def test_noiseless_annotators(self):
        x, y, _ = make_gaussian_dataset(300, 3, 2, 2.0, seed=3)
        specs = [AnnotatorSpec(target_rate=0.0, seed=1)]
        ds = annotate(x, y, specs, 1, seed=4)
        inst, _, lab = ds.annotations.T
        assert np.array_equal(lab, y[inst])

    def test_full_labeling_row_count(self):
        x, y, _ = make_gaussian_dataset(100, 3, 2, 2.0, seed=5)
        specs = [AnnotatorSpec(target_rate=0.1, seed=s) for s in range(3)]
        ds = annotate(x, y, specs, 3, seed=6)
        assert ds.annotations.shape[0] == 300
        assert np.all((ds.annotation_matrix() >= 0).sum(axis=1) == 3)

    def test_sparse_labeling_row_count(self):
        x, y, _ = make_gaussian_dataset(100, 3, 2, 2.0, seed=5)
        specs = [AnnotatorSpec(target_rate=0.1, seed=s) for s in range(4)]
        ds = annotate(x, y, specs, 1, seed=6)
        assert ds.annotations.shape[0] == 100

    def test_labels_per_instance_bounds(self):
        x, y, _ = make_gaussian_dataset(20, 3, 2, 2.0, seed=5)
        specs = [AnnotatorSpec(target_rate=0.1, seed=1)]
        with pytest.raises(ValueError):
            annotate(x, y, specs, 2, seed=0)

    def test_determinism(self):
        x, y, _ = make_gaussian_dataset(200, 3, 2, 2.0, seed=7)
        specs = [AnnotatorSpec(target_rate=0.3, seed=s) for s in range(3)]
        a = annotate(x, y, specs, 2, seed=8)
        b = annotate(x, y, specs, 2, seed=8)
        assert np.array_equal(a.annotations, b.annotations)

    def test_mid_preset_overall_rate(self):
        x, y, _ = make_gaussian_dataset(10000, 10, 4, 3.5, seed=0)
        specs = annotator_group("idn-mid", 5, seed=1)
        ds = annotate(x, y, specs, 1, seed=2)
        inst, _, lab = ds.annotations.T
        realized = np.mean(lab != y[inst])
        assert abs(realized - 0.36) <= 0.03

    def test_per_annotator_rates_on_target(self):
        specs = annotator_group("idn-mid", 5, seed=1)
        deviations = np.zeros((5, len(specs)))
        for s in range(5):
            x, y, _ = make_gaussian_dataset(5000, 10, 4, 3.5, seed=100 + s)
            ds = annotate(x, y, specs, 5, seed=200 + s)
            inst, annot, lab = ds.annotations.T
            for r, spec in enumerate(specs):
                mask = annot == r
                realized = np.mean(lab[mask] != y[inst[mask]])
                deviations[s, r] = realized - spec.target_rate
        assert np.all(np.abs(deviations.mean(axis=0)) <= 0.05)

    def test_instance_dependence_decile_gap(self):
        x, y, _ = make_gaussian_dataset(5000, 10, 4, 3.5, seed=11)
        for rate in (0.3, 0.4, 0.5):
            spec = AnnotatorSpec(target_rate=rate, seed=42)
            ds = annotate(x, y, [spec], 1, seed=12)
            inst, _, lab = ds.annotations.T
            flips = lab != y[inst]
            proj = x[inst] @ spec.projections(10, 4)[0]
            top = flips[proj >= np.quantile(proj, 0.9)].mean()
            bottom = flips[proj <= np.quantile(proj, 0.1)].mean()
            assert top - bottom >= 0.05

    def test_zero_dependence_constant_rate(self):
        x, y, _ = make_gaussian_dataset(8000, 6, 2, 3.0, seed=13)
        spec = AnnotatorSpec(target_rate=0.25, seed=3, dependence=0.0)
        ds = annotate(x, y, [spec], 1, seed=14)
        inst, _, lab = ds.annotations.T
        flips = lab != y[inst]
        assert abs(flips.mean() - 0.25) <= 0.02
        proj = x[inst] @ spec.projections(6, 2)[0]
        top = flips[proj >= np.quantile(proj, 0.9)].mean()
        bottom = flips[proj <= np.quantile(proj, 0.1)].mean()
        assert abs(top - bottom) <= 0.06
