import json
import math
from importlib import resources

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergocert.certificate import (
    DriftParams,
    MinorizationParams,
    certificate_assemble,
    taboo_bound,
    ub_bound,
    uc_bound,
    verify_h1_h2,
)
from ergocert.errors import ConditionError, ErgocertError
from ergocert.markov import exact_uc
from ergocert.split import FiniteChain
from oracles import ledger_oracle


def load_family(name):
    obj = json.loads(resources.files("ergocert").joinpath("fixtures", name).read_text())
    return [FiniteChain.from_json(c) for c in obj["chains"]], np.array(obj["v"]), obj["c_set"]


# --- building blocks -----------------------------------------------------------


def test_uc_bound_examples():
    e = math.exp(0.25)
    assert uc_bound(0.5, 1.0, 0.25) == pytest.approx((0.5 * e + e) / (1 - 0.5 * e), rel=1e-14)
    assert uc_bound(0.5, 1.0, 0.25) == pytest.approx(5.380, abs=1e-3)
    assert uc_bound(0.3, 2.0, 1e-9) == pytest.approx((1 - 0.3 + 2.0) / 0.3, rel=1e-7)
    with pytest.raises(ErgocertError, match="ln"):
        uc_bound(0.5, 1.0, -math.log(0.5))


def test_taboo_bound_examples():
    assert taboo_bound(0.3, 1) == 1.0
    assert taboo_bound(1.0, 4) == 0.0
    assert taboo_bound(0.2, 5) == pytest.approx(0.4096, rel=1e-14)


def test_ub_bound_examples():
    gamma, d1 = ub_bound(2.0, 2.0, 0.5, 0.4)
    assert gamma == pytest.approx(-0.2 * math.log(0.5) / math.log(4), rel=1e-14)
    assert gamma == pytest.approx(0.1, rel=1e-12)
    assert d1 == pytest.approx(2 * (1 + 4 / (1 - 0.5**0.25)), rel=1e-14)
    assert d1 == pytest.approx(52.3, abs=0.05)
    # varsigma close to 1 gives iota0 -> infinity and gamma -> r
    assert ub_bound(2.0, 2.0, 1 - 1e-15, 0.4)[0] == 0.4
    with pytest.raises(ErgocertError):
        ub_bound(1.0, 1.0, 0.5, 0.4)
    with pytest.raises(ErgocertError):
        ub_bound(2.0, 2.0, 1.0, 0.4)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.01, 50), st.floats(1, 20), st.floats(0.01, 0.99), st.floats(0.01, 2))
def test_ub_bound_gamma_at_most_r(d_star, v_star, vs, r):
    gamma, d1 = ub_bound(d_star, v_star, vs, r)
    assert 0 < gamma <= r
    assert d1 > d_star


def test_parameter_validation():
    for args in [(0.0, 1.0, 1.0), (1.0, 1.0, 1.0), (0.5, 0.0, 1.0), (0.5, 1.0, 0.5)]:
        with pytest.raises(ErgocertError):
            DriftParams(*args)
    for d in (0.0, 0.5, 0.7):
        with pytest.raises(ErgocertError):
            MinorizationParams(d)


# --- extraction ---------------------------------------------------------------------


def test_extract_single_two_state_chain():
    drift, minor, nu = verify_h1_h2([FiniteChain(np.array([[0.6, 0.4], [0.3, 0.7]]))], np.ones(2), [0, 1])
    assert drift.rho == 0.5 and drift.d_const == pytest.approx(0.5, abs=1e-15)
    assert minor.delta == pytest.approx(0.35, abs=1e-15)
    np.testing.assert_allclose(nu, [3 / 7, 4 / 7], atol=1e-15)


def test_extract_shrinks_nu_support():
    family = [FiniteChain(np.array([[0.6, 0.4], [0.3, 0.7]])), FiniteChain(np.array([[1.0, 0.0], [0.5, 0.5]]))]
    _, minor, nu = verify_h1_h2(family, np.ones(2), [0, 1])
    np.testing.assert_allclose(nu, [1.0, 0.0])
    assert minor.delta == pytest.approx(0.15, abs=1e-15)
    family.append(FiniteChain(np.array([[0.0, 1.0], [0.5, 0.5]])))
    with pytest.raises(ConditionError):
        verify_h1_h2(family, np.ones(2), [0, 1])


def test_extract_with_nontrivial_v():
    chains, v, c = load_family("two_state_family_vc.json")
    drift, minor, nu = verify_h1_h2(chains, v, c)
    # rho = min 2b/3 over the family, D = max (2a + rho), delta = min(1 - a)/2
    assert drift.rho == pytest.approx(0.2, abs=1e-15)
    assert drift.d_const == pytest.approx(1.2, abs=1e-14)
    assert minor.delta == pytest.approx(0.25, abs=1e-15)
    assert drift.v_star == 1.0
    np.testing.assert_array_equal(nu, [1.0, 0.0])


def test_extract_rejects_no_contraction():
    chain = FiniteChain(np.array([[0.5, 0.5], [0.0, 1.0]]))
    with pytest.raises(ConditionError):
        verify_h1_h2([chain], np.array([1.0, 2.0]), [0])


def test_uc_bound_dominates_exact_value():
    chains, v, c = load_family("two_state_family_vc.json")
    drift, _, _ = verify_h1_h2(chains, v, c)
    r = -0.5 * math.log1p(-drift.rho)
    d1 = uc_bound(drift.rho, drift.d_const, r)
    for ch in chains:
        assert np.all(exact_uc(ch, v, c, r) / v <= d1)


# --- assembly --------------------------------------------------------------------


@pytest.mark.parametrize("params", [(0.5, 0.5, 1.0, 0.35), (0.2, 1.2, 1.0, 0.25), (0.5, 1.0, 1.0, 0.45)])
def test_ledger_matches_independent_evaluation(params):
    cert = certificate_assemble(DriftParams(*params[:3]), MinorizationParams(params[3]))
    with mpmath.workdps(400):
        oracle = ledger_oracle(*params)
        assert [e.name for e in cert.ledger] == list(oracle)
        for entry in cert.ledger:
            diff = abs(entry.value.log - mpmath.log(oracle[entry.name]))
            assert diff <= 1e-12, entry.name
            assert entry.citation


def test_certificate_invariants_and_json():
    cert = certificate_assemble(DriftParams(0.5, 0.5, 1.0), MinorizationParams(0.35))
    assert cert.kappa.log > -mpmath.inf
    assert cert.kappa <= cert["r"] / 2
    assert float(cert["r"]) / 2 <= -0.25 * math.log(0.5) + 1e-15
    assert cert.r_big.log >= 0
    obj = cert.to_json()
    assert list(obj)[:2] == ["kappa", "R"]
    assert [e["name"] for e in obj["ledger"]][:3] == ["r", "D1", "D_check"]
    assert all({"name", "value", "log_value", "citation"} <= set(e) for e in obj["ledger"])
    json.dumps(obj, allow_nan=False)
    assert any("substitutions" in note for note in obj["notes"])


def test_kappa_grows_with_delta():
    lo = certificate_assemble(DriftParams(0.5, 1.0, 1.0), MinorizationParams(0.05))
    hi = certificate_assemble(DriftParams(0.5, 1.0, 1.0), MinorizationParams(0.45))
    assert hi.kappa >= lo.kappa


def test_rho_near_one_terminates():
    cert = certificate_assemble(DriftParams(1 - 1e-9, 1.0, 1.0), MinorizationParams(0.3))
    assert cert.r_big.log > 0 and cert.kappa.log > -mpmath.inf


def test_step_index_in_errors(monkeypatch):
    import ergocert.certificate as cert_mod

    def boom(*args, **kwargs):
        raise ConditionError("boom")

    monkeypatch.setattr(cert_mod, "coupling_constants_from_bounds", boom)
    with pytest.raises(ConditionError, match="^step 7: boom"):
        certificate_assemble(DriftParams(0.5, 0.5, 1.0), MinorizationParams(0.35))
