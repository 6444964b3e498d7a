"""Bounds on common-message and sum secrecy rates, and their perfect-CSI limits."""

import json

import numpy as np
import pytest

from fbsecrecy import DomainError, ExponentialMean, Gamma, UnsupportedFamilyError, max_order_statistic
from fbsecrecy.dist import stream
from fbsecrecy.bounds import (BoundKind, common_message_lower, common_message_upper, perfect_csi_common,
                              perfect_csi_sum, protocol_rate, selection_occupancy, strongest_receiver,
                              sum_rate_lower, sum_rate_upper)
from fbsecrecy.opt import optimize_thresholds_and_powers
from fbsecrecy.quantize import Quantizer, equiprobable_quantizer, index_of
from fbsecrecy.rates import pos_log_ratio

EXP1 = ExponentialMean(1.0)


@pytest.fixture(scope="module")
def k3_b2():
    lower = common_message_lower([EXP1] * 3, EXP1, 2, 10.0)
    upper = common_message_upper([EXP1] * 3, EXP1, 2, 10.0, lower=lower)
    return lower, upper


def test_single_receiver_is_the_scalar_search():
    res = common_message_lower([EXP1], EXP1, 2, 10.0)
    opt = optimize_thresholds_and_powers(EXP1, EXP1, 2, 10.0)
    assert res.value == opt.value
    assert res.kind is BoundKind.COMMON_LOWER
    assert res.bottleneck_receiver == 0


def test_identical_receivers_agree(k3_b2):
    lower, _ = k3_b2
    vals = lower.diagnostics["per_receiver_values"]
    assert len(vals) == 3 and max(vals) - min(vals) <= 1e-6
    single = common_message_lower([EXP1], EXP1, 2, 10.0)
    assert lower.value == pytest.approx(single.value, abs=1e-12)


def test_weakest_receiver_sets_common_rate():
    res = common_message_lower([EXP1, EXP1, ExponentialMean(0.25)], EXP1, 2, 10.0)
    weak = common_message_lower([ExponentialMean(0.25)], EXP1, 2, 10.0)
    assert res.bottleneck_receiver == 2
    assert res.value == pytest.approx(weak.value, abs=1e-6)


def test_upper_above_lower(k3_b2):
    lower, upper = k3_b2
    assert upper.kind is BoundKind.COMMON_UPPER
    assert upper.value >= lower.value - 1e-6


def test_upper_above_lower_with_weak_eavesdropper():
    eve = Gamma(1.0, 1e-3)
    lo = sum_rate_lower(EXP1, 2, eve, 2, 10.0)
    up = sum_rate_upper(EXP1, 2, eve, 2, 10.0, lower=lo)
    assert up.value >= lo.value - 1e-6
    perf = perfect_csi_sum(EXP1, 2, eve, 10.0)
    assert perf.value >= lo.value


def test_upper_bound_objective_by_monte_carlo():
    # draw main and eavesdropper gains, apply the optimized cell powers and average the positive part
    up = sum_rate_upper(EXP1, 1, EXP1, 2, 10.0)
    n = 10 ** 7
    gm = EXP1.sample(stream(11, 0), n)
    ge = EXP1.sample(stream(11, 1), n)
    P = up.policy.array[index_of(up.quantizer, gm)]
    x = pos_log_ratio(gm, ge, P)
    se = x.std(ddof=1) / np.sqrt(n)
    assert abs(x.mean() - up.value) <= 3 * se


def test_sum_rate_single_receiver_matches_common():
    s = sum_rate_lower(EXP1, 1, EXP1, 2, 10.0)
    c = common_message_lower([EXP1], EXP1, 2, 10.0)
    assert s.value == c.value
    assert perfect_csi_sum(EXP1, 1, EXP1, 10.0).value == perfect_csi_common([EXP1], EXP1, 10.0).value


def test_sum_rate_grows_with_receivers():
    vals = [sum_rate_lower(EXP1, K, EXP1, 2, 10.0).value for K in (1, 2, 3, 6)]
    assert np.all(np.diff(vals) >= 0)
    perf = [perfect_csi_sum(EXP1, K, EXP1, 10.0).value for K in (1, 2, 3, 6)]
    assert np.all(np.diff(perf) >= 0)
    assert all(v <= p for v, p in zip(vals, perf))


def test_common_not_above_sum(k3_b2):
    lower, _ = k3_b2
    assert lower.value <= sum_rate_lower(EXP1, 3, EXP1, 2, 10.0).value


def test_perfect_csi_dominates_every_feedback_rate():
    perf = perfect_csi_common([EXP1] * 2, EXP1, 10.0)
    prev = None
    for b in range(1, 7):
        prev = common_message_lower([EXP1] * 2, EXP1, b, 10.0, warm_start=prev)
        assert prev.value <= perf.value


def test_heterogeneous_sum_rate_unsupported():
    with pytest.raises(UnsupportedFamilyError):
        sum_rate_lower([EXP1, ExponentialMean(2.0)], 2, EXP1, 1, 10.0)
    assert strongest_receiver([EXP1, EXP1], 2) == max_order_statistic(EXP1, 2)
    assert strongest_receiver(EXP1, 1) is EXP1


def test_no_receivers():
    with pytest.raises(DomainError):
        common_message_lower([], EXP1, 1, 1.0)


def test_results_serialize_to_json(k3_b2):
    for res in (*k3_b2, perfect_csi_common([EXP1], EXP1, 1.0, grid_size=256)):
        d = json.loads(json.dumps(res.to_dict()))
        assert d["value_npcu"] == res.value
        assert d["kind"] == res.kind.value


def test_selection_occupancy_sums_to_one():
    quant = equiprobable_quantizer(EXP1, 2)
    for rule in ("min", "max"):
        occ = selection_occupancy(quant, [EXP1, ExponentialMean(2.0), EXP1], rule)
        assert occ.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(occ >= 0)
    with pytest.raises(DomainError):
        selection_occupancy(quant, [EXP1], "median")


def test_two_receiver_min_occupancy_closed_form():
    quant = Quantizer.from_thresholds([0.5, 1.5])
    sf = np.exp(-np.array([0.0, 0.5, 1.5, np.inf]))
    above = sf ** 2                      # Pr[both indices >= q]
    occ = selection_occupancy(quant, [EXP1, EXP1], "min")
    np.testing.assert_allclose(occ, above[:-1] - above[1:], atol=1e-15)


def test_strongest_selection_rate_is_sum_objective():
    res = sum_rate_lower(EXP1, 3, EXP1, 2, 10.0)
    r = protocol_rate(res.quantizer, res.policy.powers, [EXP1] * 3, EXP1, "max")
    assert r == pytest.approx(res.value, rel=1e-12)


def test_min_selection_rate_below_single_receiver_bound(k3_b2):
    lower, _ = k3_b2
    r = protocol_rate(lower.quantizer, lower.policy.powers, [EXP1] * 3, EXP1, "min")
    assert 0 < r <= lower.value


def test_values_bounded_by_best_case_capacity():
    res = sum_rate_upper(EXP1, 3, EXP1, 2, 10.0)
    d = max_order_statistic(EXP1, 3)
    cap = np.log1p(d.quantile(1 - 1e-10) * max(res.policy.powers))
    assert 0 <= res.value <= cap
