import numpy as np
import pytest

from crowdcdro.core import (
    AnnotationDataset,
    ClippedLogTransform,
    LinearTransform,
    RobustLossSpec,
    check_distribution,
    get_transform,
    loss_value,
)


def spec(transform="linear", p=1.0, kappa=1.0, epsilon=0.1):
    return RobustLossSpec(transform=get_transform(transform), p=p, kappa=kappa, epsilon=epsilon)


class TestAmbiguityBudget:
    def test_identity_scaling(self):
        assert spec(p=1, kappa=1, epsilon=0.1).ambiguity_budget() == pytest.approx(0.1)

    def test_direct_arithmetic(self):
        assert spec(p=2, kappa=2, epsilon=1.0).ambiguity_budget() == pytest.approx(0.25)

    def test_zero_epsilon_rejected(self):
        with pytest.raises(ValueError):
            spec(epsilon=0.0)

    def test_invalid_p_and_kappa(self):
        with pytest.raises(ValueError):
            spec(p=0.5)
        with pytest.raises(ValueError):
            spec(kappa=0.0)


class TestLossValue:
    def test_linear(self):
        assert loss_value(spec("linear"), [0.9, 0.1], 0) == pytest.approx(0.1)

    def test_clipped_log_boundary(self):
        got = loss_value(spec("clipped-log"), [1.0, 0.0], 0)
        assert got == pytest.approx(-np.log(0.99))

    def test_uniform(self):
        assert loss_value(spec("linear"), [1 / 3, 1 / 3, 1 / 3], 2) == pytest.approx(2 / 3)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            loss_value(spec(), [0.5, 0.5], 2)

    @pytest.mark.parametrize("name", ["linear", "clipped-log"])
    def test_nonincreasing_in_probability(self, name):
        transform = get_transform(name)
        grid = np.linspace(0.0, 1.0, 201)
        values = transform.value(grid)
        assert np.all(np.diff(values) <= 1e-12)

    def test_clipped_log_bounds(self):
        transform = ClippedLogTransform()
        grid = np.linspace(0.0, 1.0, 501)
        values = transform.value(grid)
        assert values.max() <= -np.log(0.01) + 1e-12
        assert values.min() >= -np.log(0.99) - 1e-12


class TestTransforms:
    def test_registry(self):
        assert isinstance(get_transform("linear"), LinearTransform)
        assert isinstance(get_transform("clipped-log"), ClippedLogTransform)
        with pytest.raises(ValueError):
            get_transform("hinge")

    def test_linear_is_both_convex_and_concave(self):
        t = LinearTransform()
        assert t.is_concave and t.is_convex

    def test_clipped_log_derivative_zero_outside_band(self):
        t = ClippedLogTransform()
        assert t.deriv(0.001) == 0.0
        assert t.deriv(0.999) == 0.0
        assert t.deriv(0.5) == pytest.approx(-2.0)
        assert t.deriv_interior(0.0) == pytest.approx(-100.0)


class TestCheckDistribution:
    def test_valid(self):
        out = check_distribution([0.25, 0.75])
        assert out.sum() == pytest.approx(1.0)

    def test_bad_sum(self):
        with pytest.raises(ValueError):
            check_distribution([0.5, 0.6])

    def test_negative_entry(self):
        with pytest.raises(ValueError):
            check_distribution([-0.1, 1.1])

    def test_wrong_size(self):
        with pytest.raises(ValueError):
            check_distribution([0.5, 0.5], k=3)


def toy_dataset(**overrides):
    kwargs = dict(
        features=np.zeros((3, 2)),
        annotations=np.array([[0, 0, 1], [1, 0, 0], [2, 1, 1]]),
        num_classes=2,
        num_annotators=2,
        true_labels=np.array([1, 0, 1]),
    )
    kwargs.update(overrides)
    return AnnotationDataset(**kwargs)


class TestAnnotationDataset:
    def test_valid(self):
        ds = toy_dataset()
        assert (ds.n, ds.d, ds.k, ds.r) == (3, 2, 2, 2)

    def test_duplicate_pair_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            toy_dataset(annotations=np.array([[0, 0, 1], [0, 0, 0], [1, 0, 0], [2, 0, 0]]))

    def test_uncovered_instance_rejected(self):
        with pytest.raises(ValueError, match="no annotations"):
            toy_dataset(annotations=np.array([[0, 0, 1], [2, 1, 1]]))

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            toy_dataset(annotations=np.array([[0, 0, 2], [1, 0, 0], [2, 1, 1]]))

    def test_annotation_matrix(self):
        mat = toy_dataset().annotation_matrix()
        expected = np.array([[1, -1], [0, -1], [-1, 1]])
        assert np.array_equal(mat, expected)

    def test_matrix_round_trip(self):
        ds = toy_dataset()
        rebuilt = AnnotationDataset.from_matrix(
            ds.features, ds.annotation_matrix(), num_classes=2
        )
        assert np.array_equal(
            np.sort(rebuilt.annotations, axis=0), np.sort(ds.annotations, axis=0)
        )

    def test_subset_reindexes(self):
        ds = toy_dataset()
        sub = ds.subset([0, 2])
        assert sub.n == 2
        assert np.array_equal(sub.true_labels, [1, 1])
        assert np.array_equal(sub.annotations, [[0, 0, 1], [1, 1, 1]])
