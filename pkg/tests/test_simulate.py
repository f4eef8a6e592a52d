import json
import math

import numpy as np
import pytest
from scipy import stats

from gwtpp.core import Event
from gwtpp.simulate import (GeneratorSpec, SimulationError, SyntheticPlan, default_plan, ground_truth_intensity,
                            load_plan, make_synthetic, stream, thinning_sample)


def test_hom_poisson_rate_is_constant():
    spec = GeneratorSpec("HomPoisson", (2.0,))
    for t in (0.1, 3.0, 99.0):
        np.testing.assert_allclose(ground_truth_intensity(spec, [], t), [2.0])


def test_hawkes_kernel_hand_value():
    spec = GeneratorSpec("Hawkes", (1.0,), ((0.5,),), decay=1.0)
    np.testing.assert_allclose(ground_truth_intensity(spec, [Event(0.0, 0)], math.log(2)), [1.25], rtol=1e-14)


def test_inhibition_stays_nonnegative():
    spec = GeneratorSpec("InhibitHawkes", (0.5, 0.5), ((-50.0, -50.0), (-50.0, -50.0)), link="softplus")
    hist = [Event(0.1 * i, i % 2) for i in range(1, 20)]
    for t in np.linspace(2.0, 10.0, 30):
        assert np.all(ground_truth_intensity(spec, hist, t) >= 0)


def test_invalid_specs():
    with pytest.raises(ValueError):
        GeneratorSpec("Hawkes", (1.0,), ((1.5,),), decay=1.0)     # supercritical
    with pytest.raises(ValueError):
        GeneratorSpec("HomPoisson", (-1.0,))
    with pytest.raises(ValueError):
        GeneratorSpec("InhibitHawkes", (1.0,), ((-1.0,),))       # needs softplus
    with pytest.raises(ValueError):
        GeneratorSpec("Nope", (1.0,))


def test_hom_poisson_mean_count():
    spec = GeneratorSpec("HomPoisson", (2.0,))
    n = np.array([len(thinning_sample(spec, 10.0, 0, rng=stream(101, i))) for i in range(2000)])
    assert abs(n.mean() - 20.0) < 3 * math.sqrt(20) / math.sqrt(2000)


def test_hom_poisson_gaps_are_exponential():
    # interior gaps of a finite window are length-biased, so use first arrivals
    # and the gaps of one long realization where the censored tail is negligible
    spec = GeneratorSpec("HomPoisson", (2.0,))
    first = [thinning_sample(spec, 10.0, 0, rng=stream(5, i)).times[0] for i in range(2000)]
    assert stats.kstest(first, "expon", args=(0, 0.5)).pvalue > 0.01
    long = thinning_sample(spec, 2000.0, 0, rng=stream(6, 0)).times
    assert stats.kstest(np.diff(long), "expon", args=(0, 0.5)).pvalue > 0.01


def test_inhom_poisson_count_matches_integrated_rate():
    T, amp, per = 20.0, 0.8, 10.0
    spec = GeneratorSpec("InhomPoisson", (1.0,), sin_amplitude=amp, sin_period=per)
    expected = T + amp * per / (2 * math.pi) * (1 - math.cos(2 * math.pi * T / per))
    n = np.array([len(thinning_sample(spec, T, 0, rng=stream(9, i))) for i in range(1000)])
    assert abs(n.mean() - expected) < 3 * math.sqrt(expected / 1000)


def test_hawkes_count_branching_identity_short():
    spec = GeneratorSpec("Hawkes", (1.0,), ((0.5,),), decay=1.0)
    T = 100.0
    n = np.array([len(thinning_sample(spec, T, 0, rng=stream(13, i))) for i in range(150)])
    # finite-horizon mean: mu T / (1 - a) - mu a (1 - e^{-(1-a) T}) / (1 - a)^2
    exact = T / 0.5 - 0.5 * (1 - math.exp(-0.5 * T)) / 0.25
    assert abs(n.mean() - exact) / exact < 0.1


def test_make_synthetic_counts_and_determinism():
    plan = default_plan(("Hawkes", "InhomPoisson"), 5, seed=4)
    a, b = make_synthetic(plan), make_synthetic(plan)
    assert a == b
    assert len(a) == 10 and list(a.labels).count(0) == 5
    assert make_synthetic(default_plan(("Hawkes", "InhomPoisson"), 5, seed=5)) != a


def test_four_family_plan_has_about_fifty_events():
    ds = make_synthetic(default_plan(("Hawkes", "InhomPoisson", "InhibitHawkes", "MixedHawkes"), 25, seed=0))
    mean = ds.total_events / len(ds)
    assert 40 <= mean <= 60


def test_plan_json_round_trip(tmp_path):
    plan = default_plan(("MixedHawkes", "HomPoisson"), 3, seed=2)
    p = tmp_path / "plan.json"
    p.write_text(json.dumps(plan.to_dict()))
    assert load_plan(p) == plan
    with pytest.raises(ValueError):
        SyntheticPlan(plan.cluster_specs, 0, 5, 50.0)


def test_zero_rate_raises():
    with pytest.raises(SimulationError):
        thinning_sample(GeneratorSpec("HomPoisson", (0.0,)), 5.0, 0)


def test_thinning_matches_true_intensity_via_time_rescaling():
    # compensator increments between consecutive events are iid Exp(1) under the true model
    mu, A, beta = np.array([0.5, 0.3]), np.array([[0.3, 0.1], [0.2, 0.4]]), 2.0
    spec = GeneratorSpec("Hawkes", tuple(mu), tuple(map(tuple, A)), decay=beta)
    z = []
    for i in range(100):
        s = thinning_sample(spec, 30.0, 0, rng=stream(21, i))
        lo = 0.0
        for k, t in enumerate(s.times):
            past_t, past_c = s.times[:k], s.types[:k]
            jump = A[:, past_c].sum(axis=0) / beta
            z.append(mu.sum() * (t - lo) + np.sum(jump * (np.exp(-beta * (lo - past_t)) - np.exp(-beta * (t - past_t)))))
            lo = t
    assert stats.kstest(z, "expon").pvalue > 0.01
