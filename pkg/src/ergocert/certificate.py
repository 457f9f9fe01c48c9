"""Assembly of explicit geometric-ergodicity certificates (kappa, R).

Inputs are the drift constants (rho, D, V*) and the minorization constant
delta.  The pipeline bounds the return time of the split chain to its atom,
feeds those bounds into the coupling constant chain of
:mod:`ergocert.renewal`, and combines the pieces into R.  Every intermediate
constant is kept, as a :class:`LogReal`, in an ordered ledger.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ergocert._logspace import (
    LogReal,
    ctx,
    exp_or_zero,
    log_expm1,
    log_neg_log1m,
    log_one_minus_exp_neg,
    log_one_minus_pow,
    logaddexp,
    to_jsonable,
)
from ergocert.errors import CertificateVacuousError, ConditionError, ErgocertError
from ergocert.renewal import COUPLING_CITATIONS, CouplingConstants, coupling_constants_from_bounds
from ergocert.split import FiniteChain


@dataclass(frozen=True)
class DriftParams:
    """Drift condition: P V <= (1 - rho) V + D 1_C, with V* = sup_C V."""

    rho: float
    d_const: float
    v_star: float

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ErgocertError("rho must lie in (0, 1)")
        if not self.d_const > 0:
            raise ErgocertError("D must be positive")
        if not self.v_star >= 1:
            raise ErgocertError("V* must be >= 1")


@dataclass(frozen=True)
class MinorizationParams:
    """Minorization on C: P(x, .) >= 2 delta nu(.)."""

    delta: float | LogReal

    def __post_init__(self):
        if isinstance(self.delta, LogReal):
            if not self.delta.log < -ctx.log(2):
                raise ErgocertError("delta must lie in (0, 1/2)")
        elif not 0 < self.delta < 0.5:
            raise ErgocertError("delta must lie in (0, 1/2)")

    @property
    def log_delta(self):
        if isinstance(self.delta, LogReal):
            return self.delta.log
        return ctx.log(self.delta)


@dataclass(frozen=True)
class LedgerEntry:
    name: str
    value: LogReal
    citation: str

    def to_json(self) -> dict:
        value, log_value = to_jsonable(self.value)
        return {"name": self.name, "value": value, "log_value": log_value, "citation": self.citation}


@dataclass(frozen=True)
class Certificate:
    """Deviation <= R e^{-kappa n} V(x), with every constant that produced it."""

    kappa: LogReal
    r_big: LogReal
    ledger: tuple[LedgerEntry, ...]
    drift: DriftParams
    minor: MinorizationParams
    coupling: CouplingConstants = field(repr=False)
    notes: tuple[str, ...] = ()

    def __getitem__(self, name: str) -> LogReal:
        for entry in self.ledger:
            if entry.name == name:
                return entry.value
        raise KeyError(name)

    def log_bound(self, n, v_x: float = 1.0):
        """ln(R e^{-kappa n} V(x))."""
        k = exp_or_zero(self.kappa.log)
        return self.r_big.log - k * n + ctx.log(v_x)

    def to_json(self) -> dict:
        kappa, log_kappa = to_jsonable(self.kappa)
        r_big, log_r = to_jsonable(self.r_big)
        return {
            "kappa": kappa,
            "R": r_big,
            "log_kappa": log_kappa,
            "log_R": log_r,
            "inputs": {
                "rho": self.drift.rho,
                "D": self.drift.d_const,
                "V_star": self.drift.v_star,
                "delta": to_jsonable(LogReal(self.minor.log_delta))[0],
            },
            "ledger": [e.to_json() for e in self.ledger],
            "notes": list(self.notes),
        }


def _uc_bound_log(rho: float, d_const: float, r: LogReal) -> LogReal:
    limit = -math.log1p(-rho)
    r_val = r.value
    if not 0 < r_val < limit:
        raise ErgocertError(f"rate r={float(r_val)!r} must lie in (0, -ln(1-rho)) = (0, {limit!r})")
    log_q = ctx.log1p(-ctx.mpf(rho)) + r_val  # ln((1-rho) e^r) < 0
    num = logaddexp(log_q, ctx.log(d_const) + r_val)
    den = ctx.log(-ctx.expm1(log_q))
    return LogReal(num - den)


def uc_bound(rho: float, d_const: float, r: float) -> float:
    """D_1(r) = ((1-rho) e^r + D e^r) / (1 - (1-rho) e^r), for 0 < r < -ln(1-rho)."""
    return float(_uc_bound_log(rho, d_const, LogReal.of(r)))


def taboo_bound(varsigma: float, n: int) -> float:
    """(1 - varsigma)^(n-1)."""
    if not 0 < varsigma <= 1:
        raise ErgocertError("varsigma must lie in (0, 1]")
    if n < 1:
        raise ErgocertError("n must be >= 1")
    if n == 1:
        return 1.0
    return (1.0 - varsigma) ** (n - 1)


def _ub_bound_log(d_star: LogReal, v_star: LogReal, varsigma: LogReal, r: LogReal):
    dv = d_star * v_star
    if not dv.log > 0:
        raise ErgocertError("D* V* must exceed 1")
    if not varsigma.log < 0:
        raise ErgocertError("varsigma must lie in (0, 1)")
    iota0 = LogReal(r.log - ctx.log(2) + log_neg_log1m(varsigma.log) - ctx.log(dv.log))
    gamma = min(r, iota0)
    d1 = LogReal(d_star.log + logaddexp(0, dv.log - log_one_minus_pow(varsigma.log, ctx.mpf(1) / 4)))
    return iota0, gamma, d1


def ub_bound(d_star: float, v_star: float, varsigma: float, r: float) -> tuple[float, float]:
    """(gamma, D*_1) with gamma = min(r, iota_0) and D*_1 = D*(1 + D*V*/(1 - (1-varsigma)^{1/4}))."""
    if not d_star > 1:
        raise ErgocertError("D* must exceed 1")
    if not v_star >= 1:
        raise ErgocertError("V* must be >= 1")
    if not 0 < varsigma < 1:
        raise ErgocertError("varsigma must lie strictly in (0, 1)")
    _, gamma, d1 = _ub_bound_log(LogReal.of(d_star), LogReal.of(v_star), LogReal.of(varsigma), LogReal.of(r))
    return float(gamma), float(d1)


_AUDIT_NOTE = (
    "substitutions: E e^{gamma tau} is replaced by its upper bound D2 V* (raises upsilon*, "
    "hence A* and l*), and p(1), p_min(l*) by the lower bounds delta, delta^(l*) "
    "(lowers varsigma*, iota*, gamma1); each moves kappa down and M* up, so the bound stays valid"
)


def certificate_assemble(drift: DriftParams, minor: MinorizationParams) -> Certificate:
    """Run the full constant pipeline from (rho, D, V*, delta) to (kappa, R)."""
    rho, d_const = drift.rho, drift.d_const
    v_star = LogReal.of(drift.v_star)
    log_delta = minor.log_delta
    delta = LogReal(log_delta)
    log1m_delta = ctx.log1p(-exp_or_zero(log_delta))  # ln(1 - delta)
    ledger: list[LedgerEntry] = []

    def put(name: str, value: LogReal, citation: str) -> LogReal:
        ledger.append(LedgerEntry(name, value, citation))
        return value

    step = 1
    try:
        r = put("r", LogReal.of(-ctx.log1p(-ctx.mpf(rho)) / 2), "r = -ln(1 - rho) / 2")
        step = 2
        d1 = put("D1", _uc_bound_log(rho, d_const, r),
                 "D1(r) = ((1-rho) e^r + D e^r) / (1 - (1-rho) e^r)")
        step = 3
        d_check = put("D_check", LogReal(v_star.log + d1.log - log_delta - log1m_delta),
                      "D_check(r) = V* D1(r) / (delta (1 - delta))")
        step = 4
        vs_split = put("varsigma_split", LogReal(2 * log_delta - log1m_delta),
                       "varsigma_split = delta^2 / (1 - delta)")
        step = 5
        d_star = put("D_star", 1 + d_check, "D*(r) = 1 + D_check(r)")
        iota0, gamma, d2 = _ub_bound_log(d_star, v_star, vs_split, r)
        put("iota0", iota0, "iota0 = -(r/2) ln(1 - varsigma_split) / ln(D* V*)")
        put("gamma", gamma, "gamma = min(r, iota0)")
        put("D2", d2, "D2 = D* (1 + D* V* / (1 - (1 - varsigma_split)^{1/4}))")
        step = 6
        moment = d2 * v_star
        # ln(1 + e^g/(e^g - 1) M) with e^g/(e^g - 1) = 1/(1 - e^{-g})
        log_ratio = -log_one_minus_exp_neg(gamma.log)
        upsilon = put("upsilon_chain", LogReal(ctx.log(logaddexp(0, log_ratio + moment.log))),
                      "upsilon_chain = ln(1 + e^gamma/(e^gamma - 1) D2 V*)")
        step = 7

        # p(1) = delta and p(j) >= (1-delta) delta^{j-2} * delta^2/(1-delta) = delta^j
        # for j >= 2, so min_{l <= l*} p(l) >= delta^{l*}
        def log_pmin(l_star: LogReal):
            return log_delta * l_star.value

        cc = coupling_constants_from_bounds(gamma, upsilon, ctx.zero, log_delta, log_pmin)
        for name, value in cc.items():
            put(f"renewal.{name}", value, _renewal_citation(name))
        step = 8
        kappa = put("kappa", cc.kappa / 2, "kappa = kappa_renewal / 2")
        delta_star = put("Delta_star", cc.m_star, "Delta* = M*")
        step = 9
        g_half = gamma / 2
        d3 = put("D3", LogReal(ctx.log(2) + moment.log + exp_or_zero(g_half.log) - log_expm1(g_half.log)),
                 "D3 = 2 D2 V* e^{gamma/2} / (e^{gamma/2} - 1)")
        k_ratio = LogReal(exp_or_zero(kappa.log) - log_expm1(kappa.log))
        varrho = put("varrho_star", d2 * k_ratio * delta_star * moment + (1 + d2) * moment + d3,
                     "varrho* = D2 e^kappa/(e^kappa - 1) Delta* D2 V* + (1 + D2) D2 V* + D3")
        step = 10
        r_big = put("R", 1 + LogReal(exp_or_zero(kappa.log)) * (1 + d_const) + 2 * varrho,
                    "R = 1 + e^kappa (1 + D) + 2 varrho*")
    except ErgocertError as exc:
        exc.args = (f"step {step}: {exc}",)
        raise
    except OverflowError as exc:
        raise CertificateVacuousError(f"certificate vacuous at this precision (step {step}): {exc}") from exc
    return Certificate(kappa, r_big, tuple(ledger), drift, minor, cc, (_AUDIT_NOTE,))


def _renewal_citation(name: str) -> str:
    cite = COUPLING_CITATIONS[name]
    if name == "r":
        return "renewal rate = gamma"
    if name == "upsilon_star":
        return "renewal upsilon* = upsilon_chain"
    if name == "varsigma_star":
        return "varsigma* = a(0) p(1)^2 p_min(l*) >= delta^(l*+2) with a = delta_0"
    return cite


def verify_h1_h2(
    family: Sequence[FiniteChain], v, c_set
) -> tuple[DriftParams, MinorizationParams, np.ndarray]:
    """Extract drift and minorization constants valid uniformly over ``family``."""
    if not family:
        raise ErgocertError("the family is empty")
    n = family[0].n_states
    if any(ch.n_states != n for ch in family):
        raise ErgocertError("all chains in the family must share one state space")
    v = np.asarray(v, dtype=float)
    if v.shape != (n,) or not np.all(v >= 1):
        raise ErgocertError("V needs one value >= 1 per state")
    c = sorted({int(x) for x in c_set})
    if not c or c[0] < 0 or c[-1] >= n:
        raise ErgocertError("C must be a nonempty set of state indices")
    in_c = np.zeros(n, dtype=bool)
    in_c[c] = True

    pv = np.array([ch.transition @ v for ch in family])
    if in_c.all():
        # with no state outside C the drift holds for every rho < 1; fix rho = 1/2
        rho = 0.5
    else:
        rho = 1.0 - float((pv[:, ~in_c] / v[~in_c]).max())
    if not rho > 0:
        raise ConditionError(f"no contraction off C: rho = {rho!r} <= 0; enlarge C or change V")
    d_const = float((pv[:, in_c] - (1.0 - rho) * v[in_c]).max())
    d_const = max(d_const, np.finfo(float).tiny)

    floor = np.min([ch.transition[in_c] for ch in family], axis=(0, 1))
    floor[~in_c] = 0.0
    mass = math.fsum(floor)
    if not mass > 0:
        raise ConditionError("the rows of C share no common mass: minorization is empty")
    delta = mass / 2.0
    if not delta < 0.5:
        raise ConditionError("delta = 1/2: rows on C are identical; shrink delta or C")
    nu = floor / mass
    drift = DriftParams(rho, d_const, float(v[in_c].max()))
    return drift, MinorizationParams(delta), nu
