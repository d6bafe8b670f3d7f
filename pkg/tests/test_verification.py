import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from expostdp.accounting import gaussian_variance_for_rdp
from expostdp.mechanisms import (
    DiscretePairMechanism,
    StochasticMap,
    pathological_mechanism,
    post_process,
    randomized_response,
)
from expostdp.verification import (
    PreconditionError,
    adaptive_composition,
    composition_check,
    expost_rdp_lhs_exact,
    expost_rdp_lhs_monte_carlo,
    filter_theorem_check,
    is_probabilistic_expost_private,
    ppi_counterexample_search,
    privacy_loss,
    probabilistic_dp_holds,
    probabilistic_expost_violation_mass,
    renyi_divergence_exact,
    renyi_divergence_gaussians,
    satisfies_expost_rdp,
)

from .strategies import mechanisms, stochastic_maps

LN2 = math.log(2)
# regression fixture: first witness of the deterministic grid search at delta = 0.1
WITNESS_P_X = [0.01, 0.1, 0.445, 0.445]
WITNESS_P_XP = [0.01, 0.0, 0.495, 0.495]


def brute_force_lhs(mech, alpha):
    """Outcome-by-outcome sum with the e^-inf = 0 and 0 * inf = 0 conventions."""
    total = 0.0
    for px, pxp, e in zip(mech.p_x, mech.p_xp, mech.eps):
        if math.isinf(e) or px == 0:
            continue
        if pxp == 0:
            return math.inf
        total += math.exp((1 - alpha) * e) * (px / pxp) ** alpha * pxp
    return total


def test_randomized_response_lhs():
    mech = randomized_response(0.75, math.log(3))
    value = expost_rdp_lhs_exact(mech, 2)
    assert value.lhs == pytest.approx((1 / 3) * (0.25 * 9 + 0.75 / 9), rel=1e-12)
    assert value.lhs == pytest.approx(0.7778, abs=1e-4)
    assert value.satisfied


@pytest.mark.parametrize("alpha", [2, 20])
def test_pathological_lhs_and_violation(alpha):
    mech = pathological_mechanism()
    assert expost_rdp_lhs_exact(mech, alpha).lhs == 0.5
    assert expost_rdp_lhs_exact(mech.swapped(), alpha).lhs == 0.5
    assert probabilistic_expost_violation_mass(mech) == 0.0
    assert probabilistic_expost_violation_mass(mech.swapped()) == 0.0


def test_identical_distributions_zero_eps():
    mech = DiscretePairMechanism(["a", "b"], [0.3, 0.7], [0.3, 0.7], 0.0)
    assert expost_rdp_lhs_exact(mech, 5).lhs == pytest.approx(1.0, rel=1e-15)


def test_absolute_continuity_failure_is_infinite():
    mech = DiscretePairMechanism(["a", "b"], [0.5, 0.5], [0.0, 1.0], 1.0)
    assert expost_rdp_lhs_exact(mech, 2).lhs == math.inf
    assert not satisfies_expost_rdp(mech, 2)


@settings(max_examples=100, deadline=None)
@given(mechanisms(), st.floats(1.1, 50))
def test_exact_lhs_matches_brute_force(mech, alpha):
    assert expost_rdp_lhs_exact(mech, alpha).lhs == pytest.approx(brute_force_lhs(mech, alpha), rel=1e-10)


def test_violation_mass_zero_eps():
    mech = DiscretePairMechanism(["a", "b", "c"], [0.5, 0.3, 0.2], [0.2, 0.3, 0.5], 0.0)
    # only outcome a has p_X > p_X'
    assert probabilistic_expost_violation_mass(mech) == pytest.approx(0.5)
    assert probabilistic_expost_violation_mass(randomized_response(0.75)) == 0.0
    assert is_probabilistic_expost_private(mech, 0.5)
    assert not is_probabilistic_expost_private(mech, 0.49)


def test_privacy_loss_values():
    plf = privacy_loss(randomized_response(0.75))
    assert [s.plf for s in plf] == pytest.approx([math.log(3), -math.log(3)])
    assert privacy_loss(pathological_mechanism())[0].plf == math.inf


def test_probabilistic_dp_brute_force():
    rr = randomized_response(0.75)
    assert probabilistic_dp_holds(rr, math.log(3), 0.0)
    assert not probabilistic_dp_holds(rr, math.log(2), 0.0)
    assert probabilistic_dp_holds(rr, math.log(2), 0.75)


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_post_processing_immunity(data):
    mech = data.draw(mechanisms())
    fmap = data.draw(stochastic_maps(len(mech)))
    out = post_process(mech, fmap)
    for alpha in (2.0, 20.0):
        for a, b in ((mech, out), (mech.swapped(), out.swapped())):
            before = expost_rdp_lhs_exact(a, alpha).lhs
            after = expost_rdp_lhs_exact(b, alpha).lhs
            assert before <= 1 + 1e-12
            assert after <= 1 + 1e-12
            assert after <= before * (1 + 1e-9) + 1e-15
    assert probabilistic_expost_violation_mass(mech) == 0.0
    assert probabilistic_expost_violation_mass(out) == 0.0
    assert probabilistic_expost_violation_mass(out.swapped()) == 0.0


def test_counterexample_witness_pinned():
    w = ppi_counterexample_search(0.1)
    assert w.mech.outcomes == ("a", "b", "c", "d")
    assert list(w.mech.p_x) == pytest.approx(WITNESS_P_X, abs=1e-12)
    assert list(w.mech.p_xp) == pytest.approx(WITNESS_P_XP, abs=1e-12)
    assert w.eps == LN2
    assert w.before <= 0.1 < w.after
    assert w.before == pytest.approx(0.1) and w.after == pytest.approx(0.11)
    assert w.probabilistic_dp_before and not w.probabilistic_dp_after
    merged = post_process(w.mech, w.fmap)
    assert merged.p_x[0] == pytest.approx(0.11) and merged.p_xp[0] == pytest.approx(0.01)


def test_witness_merge_is_only_cause():
    mech = DiscretePairMechanism(["a", "b", "c", "d"], WITNESS_P_X, WITNESS_P_XP, LN2)
    ident = post_process(mech, StochasticMap.identity(mech.outcomes))
    assert probabilistic_expost_violation_mass(ident) == probabilistic_expost_violation_mass(mech)
    assert is_probabilistic_expost_private(mech, 0.1)


def test_counterexample_rejects_delta():
    with pytest.raises(ValueError):
        ppi_counterexample_search(0.0)


def test_filter_theorem_on_randomized_response():
    for p in (0.6, 0.75, 0.9):
        mech = randomized_response(p)
        cap = math.log(p / (1 - p))
        assert filter_theorem_check(mech, cap, 2.0)
        assert renyi_divergence_exact(mech, 2.0) <= cap
    assert filter_theorem_check(randomized_response(0.75), math.inf, 2.0)
    same = DiscretePairMechanism(["a", "b"], [0.4, 0.6], [0.4, 0.6], 0.0)
    assert filter_theorem_check(same, 0.0, 3.0)
    assert renyi_divergence_exact(same, 3.0) == pytest.approx(0.0, abs=1e-15)


def test_filter_theorem_preconditions():
    with pytest.raises(PreconditionError):
        filter_theorem_check(randomized_response(0.75), 0.5, 2.0)
    too_small = randomized_response(0.75, eps=0.1)
    with pytest.raises(PreconditionError):
        filter_theorem_check(too_small, 1.0, 2.0)


def test_composition_of_independent_rr():
    rr = randomized_response(0.75)
    joint = adaptive_composition([rr, rr])
    assert len(joint) == 4
    assert np.allclose(joint.eps, 2 * math.log(3))
    for alpha in (2, 20):
        assert composition_check([rr, rr], alpha).lhs <= 1
        assert composition_check([rr, randomized_response(0.6)], alpha).lhs <= 1


def test_composition_with_zero_eps_identity():
    rr = randomized_response(0.75)
    noop = DiscretePairMechanism(["*"], [1.0], [1.0], 0.0)
    assert composition_check([rr, noop], 5).lhs == pytest.approx(expost_rdp_lhs_exact(rr, 5).lhs, rel=1e-12)


def test_adaptive_branch():
    # second stage picks a sharper or flatter response depending on the first outcome
    def second(labels):
        return randomized_response(0.9) if labels[0] == "yes" else randomized_response(0.6)

    first = randomized_response(0.75)
    joint = adaptive_composition([first, second])
    assert len(joint) == 4
    assert sorted(set(np.round(joint.eps, 12))) == sorted(
        {round(math.log(3) + math.log(9), 12), round(math.log(3) + math.log(1.5), 12)}
    )
    for alpha in (2, 20):
        assert composition_check([first, second], alpha).lhs <= 1
        assert composition_check([first, second], alpha).lhs == pytest.approx(brute_force_lhs(joint, alpha))
        assert satisfies_expost_rdp(joint, alpha)


def test_composition_overflow_guard():
    big = DiscretePairMechanism(list(range(400)), np.full(400, 1 / 400), np.full(400, 1 / 400), 0.0)
    with pytest.raises(OverflowError):
        adaptive_composition([big, big])


def _gaussian_mc(alpha, eps, n, seed, eps_reported=None):
    var = gaussian_variance_for_rdp(alpha, 1.0, eps)
    rep = eps if eps_reported is None else eps_reported

    def sampler(n, rng):
        return rng.normal(1.0, math.sqrt(var), n), np.full(n, rep)

    def log_ratio(y, _eps):
        return stats.norm.logpdf(y, 0.0, math.sqrt(var)) - stats.norm.logpdf(y, 1.0, math.sqrt(var))

    return expost_rdp_lhs_monte_carlo(sampler, log_ratio, alpha, n, np.random.default_rng(seed))


def test_monte_carlo_single_gaussian_is_tight():
    est, se = _gaussian_mc(20, 0.1, 10**6, 0)
    assert abs(est - 1) <= 4 * se


def test_monte_carlo_doubled_eps_has_slack():
    est, se = _gaussian_mc(20, 0.1, 10**5, 1, eps_reported=0.2)
    assert abs(est - math.exp(-19 * 0.1)) <= 4 * se


def test_monte_carlo_identical_inputs():
    def sampler(n, rng):
        return rng.normal(size=n), np.zeros(n)

    est, se = expost_rdp_lhs_monte_carlo(sampler, lambda y, e: np.zeros_like(y), 2, 10**4, np.random.default_rng(0))
    assert est == 1.0 and se == 0.0


def test_monte_carlo_stderr_scaling():
    _, se_small = _gaussian_mc(2, 0.5, 10**4, 2)
    _, se_large = _gaussian_mc(2, 0.5, 10**6, 3)
    assert se_small / se_large == pytest.approx(10.0, rel=0.15)


def test_monte_carlo_guards():
    with pytest.raises(ValueError):
        _gaussian_mc(2, 0.5, 100, 0)

    def sampler(n, rng):
        return np.zeros(n), np.zeros(n)

    with pytest.raises(FloatingPointError):
        expost_rdp_lhs_monte_carlo(sampler, lambda y, e: np.full(y.shape, 1e6), 2, 10**4, np.random.default_rng(0))


@pytest.mark.parametrize("alpha,delta,var", [(2, 1, 1), (20, 1, 1000), (5, 0.3, 0.7), (2, 0, 3)])
def test_renyi_divergence_gaussians_matches_quadrature(alpha, delta, var):
    sd = math.sqrt(var)

    def integrand(y):
        return math.exp(alpha * stats.norm.logpdf(y, 0, sd) + (1 - alpha) * stats.norm.logpdf(y, delta, sd))

    lo, hi = min(0, delta) - 40 * sd, max(0, delta) + 40 * sd
    val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200, points=[0, delta])
    assert renyi_divergence_gaussians(alpha, delta, var) == pytest.approx(math.log(val) / (alpha - 1), abs=1e-6)


def test_renyi_divergence_gaussians_examples():
    assert renyi_divergence_gaussians(20, 1, 1000) == pytest.approx(0.01)
    assert renyi_divergence_gaussians(2, 0, 5) == 0.0
    with pytest.raises(ValueError):
        renyi_divergence_gaussians(2, 1, 0)
