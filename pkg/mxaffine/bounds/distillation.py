"""Exact checks of the KL-to-likelihood bound on small categorical models."""
import math

import numpy as np

from core.utils import make_rng
from mxaffine import settings

from .models import CategoricalScenario, ScenarioReport

MAX_SIDE = 8
EPSILONS = (0.01, 0.05)


def _table(n, m, epsilon, rng):
    free = 1.0 - m * epsilon
    return epsilon + free * rng.dirichlet(np.ones(m), size=n)


def random_scenario(n, m, epsilon, rng):
    """Three random n x m tables with every entry at least `epsilon`."""
    rng = make_rng(rng)
    return CategoricalScenario(
        p_theta=_table(n, m, epsilon, rng),
        p_tilde=_table(n, m, epsilon, rng),
        q=_table(n, m, epsilon, rng),
        epsilon=epsilon,
    )


def proposition2_check(scenario):
    """|L(P~) - L(P)| against E KL(P || P~) + 2 log((1-e)/e) E TV(Q, P).

    L(P) is the expected negative log-likelihood of responses drawn from
    Q, with contexts equally likely.
    """
    p, p_tilde, q = scenario.p_theta, scenario.p_tilde, scenario.q
    delta = abs(float(np.mean(np.sum(q * (np.log(p) - np.log(p_tilde)),
                                      axis=1))))
    expected_kl = float(np.mean(np.sum(p * np.log(p / p_tilde), axis=1)))
    expected_tv = float(np.mean(0.5 * np.sum(np.abs(q - p), axis=1)))
    epsilon = scenario.epsilon
    constant = 2.0 * math.log((1.0 - epsilon) / epsilon)
    rhs = expected_kl + constant * expected_tv
    return ScenarioReport(
        delta=delta,
        expected_kl=expected_kl,
        expected_tv=expected_tv,
        rhs=rhs,
        slack=rhs - delta,
        holds=bool(delta <= rhs + 1e-12),
    )


def scenario_batch(count=settings.SCENARIO_COUNT, seed=0):
    """Reports for `count` random scenarios with n, m <= 8."""
    rng = make_rng(seed)
    reports = []
    for _ in range(count):
        n = int(rng.integers(1, MAX_SIDE + 1))
        m = int(rng.integers(2, MAX_SIDE + 1))
        epsilon = float(rng.choice(EPSILONS))
        reports.append(proposition2_check(random_scenario(n, m, epsilon, rng)))
    return reports
