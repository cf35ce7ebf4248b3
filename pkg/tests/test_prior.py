import numpy as np
import pytest

from apidrift import PAIR, SINGLE, FrequencyTable, ValidationError, build_prior, build_space
from apidrift.demo import demo_baseline, demo_space
from apidrift.prior import PriorSpec


@pytest.fixture(scope="module")
def demo_prior():
    return build_prior(demo_baseline())


class TestBuildPrior:
    def test_demo_spot_values(self, demo_prior):
        space = demo_space()
        # 50 * count / 89 for the populated cells, floor elsewhere
        checks = {
            ("frontend", "productcatalogservice"): 21.34831,
            ("frontend", "currencyservice"): 9.55056,
            ("loadgenerator", "frontend"): 5.61798,
            ("recommendationservice", "productcatalogservice"): 4.49438,
        }
        for label, value in checks.items():
            assert demo_prior.alpha0[space.encode(label)] == pytest.approx(value, abs=1e-5)
        assert demo_prior.alpha0[space.encode(("frontend", "recommendationservice"))] == 0.00006

    def test_uniform_baseline_splits_weight_evenly(self):
        space = build_space(["a", "b", "c", "d"], SINGLE)
        table = FrequencyTable(space, np.array([7, 7, 7, 7]))
        prior = build_prior(table, prior_weight=50.0)
        np.testing.assert_allclose(prior.alpha0, 12.5)

    def test_scale_invariance_exact(self):
        space = build_space(["a", "b", "c"], SINGLE)
        base = np.array([3, 0, 17])
        p1 = build_prior(FrequencyTable(space, base))
        p9 = build_prior(FrequencyTable(space, 9 * base))
        assert (p1.alpha0 == p9.alpha0).all()
        assert (p1.theta0 == p9.theta0).all()

    def test_nonzero_mass_sums_to_weight(self, demo_prior):
        mask = demo_prior.alpha0 > demo_prior.floor
        assert demo_prior.alpha0[mask].sum() == pytest.approx(50.0, abs=1e-9)

    def test_theta0_strictly_positive_and_normalized(self, demo_prior):
        assert (demo_prior.theta0 > 0).all()
        assert demo_prior.theta0.sum() == pytest.approx(1.0, abs=1e-12)

    def test_all_zero_baseline_rejected(self):
        space = build_space(["a"], SINGLE)
        with pytest.raises(ValidationError):
            build_prior(FrequencyTable.zeros(space))

    @pytest.mark.parametrize("kwargs", [
        {"prior_weight": 0.0}, {"prior_weight": -1.0},
        {"floor": 0.0}, {"floor": -0.1}, {"prior_odds": 0.0},
    ])
    def test_bad_parameters_rejected(self, kwargs):
        space = build_space(["a", "b"], SINGLE)
        table = FrequencyTable(space, np.array([1, 1]))
        with pytest.raises(ValidationError):
            build_prior(table, **kwargs)

    def test_heavy_floor_mass_warns(self):
        space = build_space([f"s{i}" for i in range(40)], PAIR)  # 1681 categories
        counts = np.zeros(space.K, dtype=np.int64)
        counts[0] = 5
        with pytest.warns(UserWarning, match="floor mass"):
            build_prior(FrequencyTable(space, counts), prior_weight=50.0, floor=0.001)

    def test_demo_floor_mass_is_quiet(self):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            build_prior(demo_baseline())


def test_json_round_trip_bit_exact(demo_prior):
    again = PriorSpec.from_json(demo_prior.to_json())
    assert (again.alpha0 == demo_prior.alpha0).all()
    assert (again.theta0 == demo_prior.theta0).all()
    assert again.prior_weight == demo_prior.prior_weight
    assert again.floor == demo_prior.floor
    assert again.prior_odds == demo_prior.prior_odds
    assert again.space == demo_prior.space
