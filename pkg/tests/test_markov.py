import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergocert.errors import ErgocertError, ReducibleChainError
from ergocert.markov import (
    deviation_curve,
    deviation_reports,
    exact_deviation,
    exact_uc,
    invariant_exact,
    reports_to_csv,
    simulate_chain,
    simulate_coupling,
)
from ergocert.renewal import Pmf, sigma1_law, upsilon_star
from ergocert.split import FiniteChain

P2 = FiniteChain(np.array([[0.6, 0.4], [0.3, 0.7]]))


def test_invariant_examples():
    np.testing.assert_allclose(invariant_exact(P2), [3 / 7, 4 / 7], atol=1e-15)
    ds = FiniteChain(np.array([[0.2, 0.5, 0.3], [0.5, 0.2, 0.3], [0.3, 0.3, 0.4]]))
    np.testing.assert_allclose(invariant_exact(ds), [1 / 3] * 3, atol=1e-15)
    with pytest.raises(ReducibleChainError):
        invariant_exact(FiniteChain(np.eye(2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.data())
def test_invariant_residual(n, data):
    rows = [data.draw(st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n)) for _ in range(n)]
    P = np.array(rows)
    chain = FiniteChain(P / P.sum(axis=1, keepdims=True))
    pi = invariant_exact(chain)
    assert np.abs(pi @ chain.transition - pi).max() <= 1e-12
    assert pi.min() >= 0 and pi.sum() == pytest.approx(1.0, abs=1e-14)


def test_exact_deviation_examples():
    assert exact_deviation(P2, np.ones(2), 0, 0) == pytest.approx(0.0, abs=1e-15)
    assert exact_deviation(P2, np.array([1.0, 2.0]), 0, 0) == pytest.approx(4 / 7, abs=1e-15)
    with pytest.raises(ErgocertError):
        exact_deviation(P2, np.array([0.5, 2.0]), 0, 1)


@pytest.mark.parametrize("a,b", [(0.4, 0.3), (0.5, 0.4), (0.1, 0.05), (0.9, 0.8)])
def test_two_state_spectral_oracle(a, b):
    # P^n(x, .) - pi = lam^n (e_x - pi) with lam = 1 - a - b
    chain = FiniteChain(np.array([[1 - a, a], [b, 1 - b]]))
    v = np.array([1.0, 2.0])
    pi = np.array([b, a]) / (a + b)
    lam = 1 - a - b
    for x in (0, 1):
        mu0 = np.eye(2)[x] - pi
        # sup over the box is attained at f = V where mu0 > 0 and f = 1 elsewhere, or the reverse;
        # the absolute value makes the sign of lam^n irrelevant
        pos = mu0 > 0
        hi = (mu0[pos] * v[pos]).sum() + mu0[~pos].sum()
        lo = mu0[pos].sum() + (mu0[~pos] * v[~pos]).sum()
        curve = deviation_curve(chain, v, x, 30)
        expected = np.abs(lam) ** np.arange(31) * max(hi, -lo)
        # deviations fall to the rounding floor of P^n (a few ulp of 1) well before n = 30
        np.testing.assert_allclose(curve, expected, rtol=1e-9, atol=1e-14)
        assert np.all(np.diff(curve) <= 1e-14)


def test_deviation_reports_and_csv():
    reps = deviation_reports(P2, np.ones(2), 0, 3, kappa=0.1, r_big=2.0)
    assert [r.n for r in reps] == [0, 1, 2, 3]
    assert all(r.dominated for r in reps)
    assert reps[1].bound == pytest.approx(2.0 * math.exp(-0.1), rel=1e-14)
    assert reps[2].slack == pytest.approx(reps[2].bound - reps[2].exact_dev, rel=1e-15)
    text = reports_to_csv(reps)
    lines = text.splitlines()
    assert lines[0] == "n,exact_dev,bound,slack"
    assert len(lines) == 5
    n, dev, bound, slack = lines[2].split(",")
    assert float(bound) == reps[1].bound and float(dev) == reps[1].exact_dev


def test_huge_bounds_render_as_text():
    from ergocert._logspace import LogReal

    reps = deviation_reports(P2, np.ones(2), 0, 1, kappa=LogReal(-5000), r_big=LogReal(10_000))
    assert reps[0].bound_text().endswith("e+4342")
    assert reps[0].slack_text().endswith("e+4342")


def test_exact_uc_divergence():
    chain = FiniteChain(np.array([[0.5, 0.5], [0.1, 0.9]]))
    assert np.all(np.isinf(exact_uc(chain, np.ones(2), [0], -math.log(0.9))))
    assert np.all(np.isfinite(exact_uc(chain, np.ones(2), [0], 0.05)))


def test_exact_uc_by_series():
    chain = FiniteChain(np.array([[0.5, 0.5], [0.2, 0.8]]))
    v = np.array([1.0, 1.5])
    r = 0.1
    # sum_j e^{rj} E_x V(X_j) 1{tau_C >= j} by forward propagation
    P = chain.transition
    total = np.zeros(2)
    for x in range(2):
        w = np.eye(2)[x]
        for j in range(1, 2000):
            w = w @ P
            total[x] += math.exp(r * j) * (w @ v)
            w[0] = 0.0
    np.testing.assert_allclose(exact_uc(chain, v, [0], r), total, rtol=1e-10)


# --- simulation ----------------------------------------------------------------------


def test_simulate_chain_basics():
    assert np.all(simulate_chain(FiniteChain(np.eye(3)), 2, 50, seed=1) == 2)
    a = simulate_chain(P2, 0, 1000, seed=7)
    b = simulate_chain(P2, 0, 1000, seed=7)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, simulate_chain(P2, 0, 1000, seed=8))


def test_simulate_chain_occupation():
    n = 100_000
    path = simulate_chain(P2, 0, n, seed=3)
    freq = np.mean(path[1:] == 1)
    pi1, lam = 4 / 7, 0.3
    # asymptotic variance of the occupation fraction for a two-state chain
    sd = math.sqrt(pi1 * (1 - pi1) * (1 + lam) / (1 - lam) / n)
    assert abs(freq - pi1) <= 3 * sd


def test_coupling_deterministic_renewals():
    est = simulate_coupling(Pmf.delta(0), Pmf.delta(0), Pmf.delta(1), 100, 50, seed=0, r=0.5, gamma1=0.5)
    assert np.all(est.sigma1 == 1) and np.all(est.varpi == 1) and np.all(est.tau == 1)
    assert est.mean_exp_r_sigma1 == pytest.approx(math.exp(0.5), rel=1e-14)


def test_coupling_sigma1_law():
    p = Pmf.from_dict({1: 0.5, 2: 0.5})
    est = simulate_coupling(Pmf.delta(0), Pmf.delta(0), p, 100_000, seed=11)
    law = sigma1_law(Pmf.delta(0), p, 2).to_dense(2)
    for l in (1, 2):
        frac = np.mean(est.sigma1 == l)
        sd = math.sqrt(law[l] * (1 - law[l]) / est.n_paths)
        assert abs(frac - law[l]) <= 3 * sd


def test_coupling_reproducible_and_thread_independent(monkeypatch):
    p = Pmf.geometric(0.5)
    kwargs = dict(seed=5, r=0.2, gamma1=0.01)
    monkeypatch.setenv("ERGOCERT_THREADS", "1")
    one = simulate_coupling(Pmf.delta(0), Pmf.delta(0), p, 20_000, **kwargs)
    monkeypatch.setenv("ERGOCERT_THREADS", "4")
    four = simulate_coupling(Pmf.delta(0), Pmf.delta(0), p, 20_000, **kwargs)
    assert one.to_json() == four.to_json()
    assert np.array_equal(one.tau, four.tau)


def test_coupling_estimates_at_least_one():
    p = Pmf.uniform(1, 4)
    r = 0.3
    est = simulate_coupling(Pmf.delta(0), Pmf.delta(0), p, 5_000, seed=2, r=r, gamma1=0.05)
    assert est.mean_exp_r_sigma1 >= 1 and est.mean_exp_gamma1_varpi >= 1
    assert est.stderr_exp_r_sigma1 >= 0
    assert np.all(np.diff(est.tail_tau) <= 0)
    assert est.mean_exp_r_sigma1 <= 3 * math.exp(upsilon_star(p, r)) + 3 * est.stderr_exp_r_sigma1


def test_coupling_preconditions():
    with pytest.raises(ErgocertError):
        simulate_coupling(Pmf.delta(1), Pmf.delta(0), Pmf.delta(1), 10)
    with pytest.raises(ErgocertError):
        simulate_coupling(Pmf.delta(0), Pmf.delta(0), Pmf.from_dict({0: 0.5, 1: 0.5}), 10)
