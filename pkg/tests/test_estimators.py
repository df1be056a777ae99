import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from conftest import crossing_count
from renewal_dynamics.estimators import (
    FamilyTreeLabeler,
    IntensityEstimator,
    PopulationProcess,
    check_marks,
)
from renewal_dynamics.marks import SeedSpec, make_distribution, sample_marks


@pytest.fixture(scope="module")
def geom_marks():
    return sample_marks(make_distribution("geometric:0.5"), SeedSpec(21, "estimators"), np.arange(50_000))


def test_check_marks_shapes():
    assert check_marks([1, 2, 3]).tolist() == [1, 2, 3]
    assert check_marks(np.array([[1], [2]])).tolist() == [1, 2]
    assert check_marks([1.0, 2.0]).dtype == np.int64


@pytest.mark.parametrize("bad", [[[1, 2], [3, 4]], [1, 0, 2], [1.5, 2], [1, np.nan]])
def test_check_marks_rejects(bad):
    with pytest.raises(ValueError):
        check_marks(bad)


def test_params_round_trip():
    est = PopulationProcess(eps=1e-6, dist="geometric:0.5")
    assert est.get_params() == {"eps": 1e-6, "burn_in": None, "dist": "geometric:0.5", "start": 0}
    twin = clone(est).set_params(start=-3)
    assert twin.start == -3 and est.start == 0


def test_not_fitted():
    with pytest.raises(NotFittedError):
        PopulationProcess().transform([1, 1])
    with pytest.raises(NotFittedError):
        FamilyTreeLabeler().predict([0])


def test_transform_is_population_count():
    marks = [10, 3, 8, 3, 3, 6, 1]
    est = PopulationProcess(burn_in=0, start=-6).fit(marks)
    np.testing.assert_array_equal(est.transform(marks), crossing_count(marks))
    assert est.transform(marks)[-1] == 5


def test_population_fit(geom_marks):
    est = PopulationProcess(dist="geometric:0.5").fit(geom_marks)
    assert est.trace_.B == 30
    assert est.cycles_ is not None and len(est.cycles_) > 1000
    assert est.mean_population_.within(2.0)
    assert est.n_features_in_ == 1


def test_population_in_pipeline(geom_marks):
    pipe = make_pipeline(PopulationProcess(dist="geometric:0.5"))
    out = pipe.fit_transform(geom_marks[:1000])
    assert out.shape == (1000,) and out.min() == 1


def test_labeler(geom_marks):
    est = FamilyTreeLabeler(dist="geometric:0.5")
    labels = est.fit_predict(geom_marks)
    assert labels.shape == geom_marks.shape
    assert est.predict([est.anchor_])[0] == "successful"
    assert set(labels[: est.anchor_]) == {"unknown"}
    frac = np.mean(labels[est.anchor_:] == "successful")
    assert abs(frac - 0.5) < 0.02
    with pytest.raises(ValueError):
        est.predict([10 ** 9])


def test_labeler_constant_one():
    labels = FamilyTreeLabeler(dist="constant:1").fit_predict(np.ones(30, dtype=int))
    assert set(labels) == {"successful"}


def test_intensity_estimator(geom_marks):
    est = IntensityEstimator(dist="geometric:0.5").fit(geom_marks)
    assert est.lambda_o_.within(0.2887881)
    assert est.lambda_s_.within(0.5)
    assert est.lambda_s_.value + est.lambda_e_ == pytest.approx(1.0)
    assert est.score(geom_marks) <= 0


def test_intensity_estimator_short_input():
    with pytest.raises(ValueError, match="too few"):
        IntensityEstimator(burn_in=0).fit([1, 2, 1])
