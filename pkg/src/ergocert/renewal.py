"""Integer-supported laws, renewal sequences and the coupling constant chain.

All probability laws live on the nonnegative integers and are stored densely
from their first charged index.  The coupling constants that feed the
quantitative renewal bound are evaluated in log space (see
:mod:`ergocert._logspace`) because several of them overflow doubles for any
realistic input.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from ergocert._logspace import (
    LogReal,
    ctx,
    exp_or_zero,
    log_expm1,
    log_neg_log1m,
    log_one_minus_exp_neg,
    log_one_minus_pow,
    logaddexp,
)
from ergocert.errors import (
    ConditionError,
    ConstantOverflowError,
    ErgocertError,
    TruncationWarning,
)

DEFAULT_CAP = 4096
R_MIN = 1e-12
_MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Pmf:
    """Finitely stored probability mass function on {0, 1, 2, ...}.

    ``masses[i]`` is the probability of ``support_offset + i``.  Mass that is
    known to exist beyond the stored range (a truncated law) is accounted for
    in ``tail_mass_bound``.
    """

    support_offset: int
    masses: np.ndarray
    tail_mass_bound: float = 0.0

    def __post_init__(self):
        masses = np.array(self.masses, dtype=float, copy=True).ravel()
        if self.support_offset < 0:
            raise ErgocertError("support_offset must be >= 0")
        if masses.size == 0:
            masses = np.zeros(1)
        if np.any(~np.isfinite(masses)):
            raise ErgocertError("masses must be finite")
        if masses.min() < -1e-15 or masses.max() > 1 + _MASS_TOL:
            raise ErgocertError("every mass must lie in [0, 1]")
        masses = np.clip(masses, 0.0, 1.0)
        tail = float(self.tail_mass_bound)
        if not 0.0 <= tail <= 1.0:
            raise ErgocertError("tail_mass_bound must lie in [0, 1]")
        total = math.fsum(masses)
        if total > 1 + _MASS_TOL:
            raise ErgocertError(f"stored masses sum to {total!r} > 1")
        if abs(total + tail - 1.0) > _MASS_TOL:
            raise ErgocertError(
                f"stored mass {total!r} plus tail {tail!r} does not sum to 1"
            )
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "support_offset", int(self.support_offset))
        object.__setattr__(self, "tail_mass_bound", tail)

    # construction helpers

    @classmethod
    def delta(cls, k: int) -> Pmf:
        return cls(k, np.ones(1))

    @classmethod
    def from_weights(cls, weights: Sequence[float], offset: int = 0) -> Pmf:
        w = np.asarray(weights, dtype=float)
        return cls(offset, w / w.sum())

    @classmethod
    def uniform(cls, lo: int, hi: int) -> Pmf:
        return cls.from_weights(np.ones(hi - lo + 1), offset=lo)

    @classmethod
    def geometric(cls, q: float, cap: int = DEFAULT_CAP) -> Pmf:
        """P(k) = q (1-q)^(k-1) on k = 1 .. cap-1, remainder in the tail."""
        if not 0 < q <= 1:
            raise ErgocertError("geometric parameter must lie in (0, 1]")
        k = np.arange(1, cap)
        with np.errstate(under="ignore"):
            masses = q * np.power(1.0 - q, k - 1)
            tail = float((1.0 - q) ** (cap - 1))
        # the exact tail only; rounding slack in the stored masses is not tail mass
        return cls(1, masses, min(tail, 1.0))

    @classmethod
    def from_dict(cls, mapping: dict[int, float], tail_mass_bound: float = 0.0) -> Pmf:
        if not mapping:
            raise ErgocertError("empty pmf")
        lo, hi = min(mapping), max(mapping)
        masses = np.zeros(hi - lo + 1)
        for k, m in mapping.items():
            masses[k - lo] += m
        return cls(lo, masses, tail_mass_bound)

    # access

    @property
    def max_index(self) -> int:
        return self.support_offset + self.masses.size - 1

    def __getitem__(self, k: int) -> float:
        i = k - self.support_offset
        if 0 <= i < self.masses.size:
            return float(self.masses[i])
        return 0.0

    def to_dense(self, n: int) -> np.ndarray:
        """Masses at indices 0..n (zeros outside the stored support)."""
        out = np.zeros(n + 1)
        lo = self.support_offset
        hi = min(self.max_index, n)
        if hi >= lo:
            out[lo:hi + 1] = self.masses[: hi - lo + 1]
        return out

    def mean(self) -> float:
        k = np.arange(self.support_offset, self.max_index + 1)
        return math.fsum(k * self.masses)

    @property
    def is_increment(self) -> bool:
        return self[0] == 0.0

    def require_increment(self) -> None:
        if not self.is_increment:
            raise ErgocertError("an increment law needs p(0) = 0")

    def items(self) -> Iterable[tuple[int, float]]:
        for i, m in enumerate(self.masses):
            yield self.support_offset + i, float(m)

    # serialization

    def to_text(self) -> str:
        lines = [f"# tail_mass_bound {self.tail_mass_bound!r}"]
        lines += [f"{k} {m!r}" for k, m in self.items() if m != 0.0]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Pmf:
        tail = 0.0
        mapping: dict[int, float] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "tail_mass_bound":
                    tail = float(parts[1])
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ErgocertError(f"line {lineno}: expected 'index mass', got {raw!r}")
            k, m = int(parts[0]), float(parts[1])
            mapping[k] = mapping.get(k, 0.0) + m
        return cls.from_dict(mapping, tail)

    def to_json(self) -> dict:
        return {
            "tail_mass_bound": self.tail_mass_bound,
            "pmf": [[k, m] for k, m in self.items() if m != 0.0],
        }

    @classmethod
    def from_json(cls, obj) -> Pmf:
        tail = 0.0
        if isinstance(obj, dict):
            tail = float(obj.get("tail_mass_bound", 0.0))
            obj = obj["pmf"]
        obj = list(obj)
        if obj and all(isinstance(e, (list, tuple)) for e in obj):
            return cls.from_dict({int(k): float(m) for k, m in obj}, tail)
        return cls(0, np.asarray(obj, dtype=float), tail)

    @classmethod
    def load(cls, path) -> Pmf:
        with open(path) as fh:
            text = fh.read()
        if text.lstrip().startswith(("[", "{")):
            return cls.from_json(json.loads(text))
        return cls.from_text(text)


def convolve(f: Pmf, g: Pmf, cap: int = DEFAULT_CAP) -> Pmf:
    """Convolution ``(f*g)(n) = sum_k f(k) g(n-k)``, truncated at index ``cap``.

    Mass that lands at an index >= ``cap`` is moved into the tail and a
    :class:`TruncationWarning` is issued.
    """
    full = np.convolve(f.masses, g.masses)
    offset = f.support_offset + g.support_offset
    tail_in = f.tail_mass_bound + g.tail_mass_bound - f.tail_mass_bound * g.tail_mass_bound
    keep = max(0, cap - offset)
    dropped = 0.0
    if full.size > keep:
        dropped = math.fsum(full[keep:])
        if dropped > 0:
            warnings.warn(
                f"convolution truncated at index {cap}: {dropped:.3e} mass moved to tail",
                TruncationWarning,
                stacklevel=2,
            )
        full = full[:keep]
    stored = math.fsum(full)
    tail = min(1.0, max(0.0, tail_in + dropped, 1.0 - stored))
    return Pmf(offset, full, tail)


def renewal_sequence(p: Pmf, n_max: int) -> np.ndarray:
    """Renewal probabilities u(0..n_max) via u(n) = sum_k p(k) u(n-k)."""
    p.require_increment()
    pd = p.to_dense(n_max)
    u = np.zeros(n_max + 1)
    u[0] = 1.0
    for n in range(1, n_max + 1):
        u[n] = pd[1:n + 1] @ u[n - 1::-1]
    return u


def stationary_delay(p: Pmf) -> Pmf:
    """Delay law b(j) = (1/m) sum_{i>j} p(i) making the renewal process stationary."""
    p.require_increment()
    if p.tail_mass_bound > 1e-15:
        raise ErgocertError("stationary delay needs a fully stored law (finite mean)")
    m = p.mean()
    if not (math.isfinite(m) and m > 0):
        raise ErgocertError("increment law has no finite positive mean")
    dense = p.to_dense(p.max_index)
    # tails[j] = sum_{i>j} p(i) for j = 0 .. max_index-1
    tails = np.cumsum(dense[::-1])[::-1][1:]
    b = tails / m
    return Pmf(0, b, max(0.0, 1.0 - math.fsum(b)))


class ExpMoment(NamedTuple):
    value: float
    tail_term: float

    @property
    def total(self) -> float:
        return self.value + self.tail_term


def exp_moment(f: Pmf, r: float) -> ExpMoment:
    """``sum_k e^{rk} f(k)`` over the stored support, with the tail priced at the cap."""
    if r < 0:
        raise ErgocertError("rate must be >= 0")
    k = np.arange(f.support_offset, f.max_index + 1)
    pos = f.masses > 0
    if not pos.any():
        value = 0.0
    else:
        log_val = logsumexp(r * k[pos] + np.log(f.masses[pos]))
        if log_val > 709.0:
            raise ConstantOverflowError("exp_moment", f"E exp(r Y) overflows at rate r={r!r}")
        value = float(np.exp(log_val))
    tail_term = 0.0
    if f.tail_mass_bound > 0:
        cap = f.max_index + 1
        log_tail = r * cap + math.log(f.tail_mass_bound)
        if log_tail > 709.0:
            raise ConstantOverflowError("exp_moment", f"tail term overflows at rate r={r!r}")
        tail_term = math.exp(log_tail)
    return ExpMoment(value, tail_term)


def upsilon_star(p: Pmf, r: float) -> float:
    """ln(1 + e^r/(e^r - 1) E e^{rY}) for the increment law ``p``."""
    if not r > R_MIN:
        raise ErgocertError(f"rate must exceed {R_MIN}; e^r/(e^r-1) has a pole at 0")
    p.require_increment()
    moment = exp_moment(p, r).total
    return math.log1p(moment / -math.expm1(-r))


def sigma1_law(a: Pmf, p: Pmf, l_max: int) -> Pmf:
    """Law of the first time l >= 1 at which the forward recurrence chain sits at 1."""
    a0 = a[0]
    if not a0 > 0:
        raise ErgocertError("the delay law needs a(0) > 0")
    p.require_increment()
    l = np.arange(1, l_max + 1)
    pl = p.to_dense(l_max + 1)
    ad = a.to_dense(l_max + 1)
    masses = a0 * pl[l] * pl[1] + ad[1] * pl[l] + a0 * pl[l + 1] + ad[l + 1]
    return Pmf(1, masses, max(0.0, 1.0 - math.fsum(masses)))


_COUPLING_FIELDS = (
    ("r", "exponential-moment rate r"),
    ("upsilon_star", "upsilon* >= ln(E e^{rY0} + E e^{rY0'} + E e^{rY1})"),
    ("r1", "r1 = r^2 / (2 upsilon*)"),
    ("rho_star", "rho* = (1 - e^{-r1}) / 2"),
    ("a_star", "A* = 3 e^{upsilon* + r/2} / (1 - e^{-r/2})"),
    ("l_star", "l* = floor((2/r) ln(2 A* / (1 - e^{-r1}))) + 1"),
    ("a1_star", "A*_1 = (sqrt(1-rho*) + (1+A*) e^{r1 l*}) / (1 - sqrt(1-rho*))"),
    ("gamma_star", "gamma* = -ln(1 - rho*) / 2"),
    ("varsigma_star", "varsigma* = a(0) p(1)^2 p_min(l*)"),
    ("iota_star", "iota* = -r ln(1 - varsigma*) / (2 (ln A* + r1 l*))"),
    ("gamma1", "gamma1 = min(gamma*, iota*)"),
    ("a2_star", "A*_2 = A*_1 (1 + A*_1 e^{r1 l*} / (1 - (1 - varsigma*)^{1/4}))"),
    ("m_star", "M* = sqrt(3 A*_2 e^{upsilon*}) e^{gamma1/4} / (e^{gamma1/4} - 1)"),
    ("kappa", "kappa = gamma1 r / (2 upsilon*)"),
)

COUPLING_CITATIONS = dict(_COUPLING_FIELDS)


@dataclass(frozen=True)
class CouplingConstants:
    """Every constant of the coupling argument, each as a :class:`LogReal`."""

    r: LogReal
    upsilon_star: LogReal
    r1: LogReal
    rho_star: LogReal
    a_star: LogReal
    l_star: LogReal
    a1_star: LogReal
    gamma_star: LogReal
    varsigma_star: LogReal
    iota_star: LogReal
    gamma1: LogReal
    a2_star: LogReal
    m_star: LogReal
    kappa: LogReal
    notes: tuple = field(default=(), compare=False)

    def items(self) -> list[tuple[str, LogReal]]:
        return [(name, getattr(self, name)) for name, _ in _COUPLING_FIELDS]

    @property
    def l_star_int(self) -> int | None:
        """l* as a Python int when it is small enough to enumerate."""
        if self.l_star.log > ctx.log(1e15):
            return None
        return int(ctx.nint(self.l_star.value))

    def log_bound(self, n):
        """ln(M* e^{-kappa n}) for integer(s) ``n``."""
        kappa = self.kappa.value if self.kappa.log > -10_000 else ctx.zero
        return [self.m_star.log - kappa * int(k) for k in np.atleast_1d(n)]


def _l_star_from(x: LogReal) -> LogReal:
    # floor(x) + 1, rounded upward once x is beyond exact integer range;
    # a larger l* keeps every downstream bound valid.
    if x.log < ctx.log(ctx.mpf(10) ** 30):
        return LogReal.of(ctx.floor(x.value) + 1)
    return LogReal(x.log + ctx.mpf("1e-30"))


def coupling_constants_from_bounds(
    r,
    upsilon,
    log_a0,
    log_p1,
    log_pmin: Callable[[LogReal], object],
) -> CouplingConstants:
    """Run the constant chain from certified inputs.

    ``r`` and ``upsilon`` may be floats or :class:`LogReal`.  ``log_a0`` and
    ``log_p1`` are logs of lower bounds on a(0) and p(1); ``log_pmin`` maps l*
    to the log of a lower bound on min_{1<=l<=l*} p(l).
    """
    r = LogReal.coerce(r)
    ups = LogReal.coerce(upsilon)
    step = "r1"
    try:
        ln2, ln3 = ctx.log(2), ctx.log(3)
        ups_val = ups.value
        r_val = exp_or_zero(r.log)

        r1 = r * r / (2 * ups)
        step = "rho_star"
        rho_star = LogReal(log_one_minus_exp_neg(r1.log) - ln2)
        step = "a_star"
        a_star = LogReal(ln3 + ups_val + r_val / 2 - log_one_minus_exp_neg(r.log - ln2))
        step = "l_star"
        inner = ln2 + a_star.log - log_one_minus_exp_neg(r1.log)
        l_star = _l_star_from(LogReal(ln2 - r.log + ctx.log(inner)))
        r1_l = exp_or_zero(r1.log + l_star.log)
        step = "a1_star"
        half_log1m_rho = ctx.log1p(-exp_or_zero(rho_star.log)) / 2
        num = logaddexp(half_log1m_rho, logaddexp(0, a_star.log) + r1_l)
        a1_star = LogReal(num - log_one_minus_pow(rho_star.log, ctx.mpf(1) / 2))
        step = "gamma_star"
        gamma_star = LogReal(log_neg_log1m(rho_star.log) - ln2)
        step = "varsigma_star"
        log_vs = ctx.mpf(log_a0) + 2 * ctx.mpf(log_p1) + ctx.mpf(log_pmin(l_star))
        if not log_vs < 0:
            if log_vs > 1e-30:
                raise ConditionError(f"varsigma* = {ctx.exp(log_vs)} exceeds 1")
            log_vs = ctx.mpf(0)
        varsigma = LogReal(log_vs)
        step = "iota_star"
        denom = a_star.log + r1_l
        iota_star = LogReal(r.log + log_neg_log1m(varsigma.log) - ln2 - ctx.log(denom))
        gamma1 = min(gamma_star, iota_star)
        step = "a2_star"
        inner2 = a1_star.log + r1_l - log_one_minus_pow(varsigma.log, ctx.mpf(1) / 4)
        a2_star = LogReal(a1_star.log + logaddexp(0, inner2))
        step = "m_star"
        g4 = gamma1.log - ctx.log(4)
        m_star = LogReal(
            (ln3 + a2_star.log + ups_val) / 2 + exp_or_zero(g4) - log_expm1(g4)
        )
        step = "kappa"
        kappa = gamma1 * r / (2 * ups)
    except (OverflowError, ZeroDivisionError) as exc:
        raise ConstantOverflowError(step, str(exc)) from exc
    if kappa > r / 2:
        raise ErgocertError("kappa exceeds r/2; upsilon* is too small for this rate")
    return CouplingConstants(
        r=r, upsilon_star=ups, r1=r1, rho_star=rho_star, a_star=a_star, l_star=l_star,
        a1_star=a1_star, gamma_star=gamma_star, varsigma_star=varsigma,
        iota_star=iota_star, gamma1=gamma1, a2_star=a2_star, m_star=m_star, kappa=kappa,
    )


def _pmin_from_pmf(p: Pmf) -> Callable[[LogReal], object]:
    def log_pmin(l_star: LogReal):
        if l_star.log > ctx.log(p.max_index + 1):
            raise ConditionError(
                f"positivity p(l) > 0 cannot hold for l <= l* = {float(l_star):.6g}: "
                f"the increment law stops at index {p.max_index}"
            )
        l = int(ctx.nint(l_star.value))
        window = p.to_dense(l)[1:l + 1]
        pmin = float(window.min())
        if pmin <= 0:
            bad = int(np.argmin(window)) + 1
            raise ConditionError(
                f"positivity p(l) > 0 fails at l = {bad} <= l* = {l}; varsigma* would be 0"
            )
        return ctx.log(pmin)

    return log_pmin


def coupling_constants(a: Pmf, p: Pmf, r: float, upsilon: float) -> CouplingConstants:
    """Coupling constants for delay law ``a``, increment law ``p`` and rate ``r``.

    ``upsilon`` must dominate ln(E e^{rY0} + E e^{rY0'} + E e^{rY1}); positivity
    of p is checked on 1..l* only.
    """
    p.require_increment()
    if not a[0] > 0:
        raise ErgocertError("the delay law needs a(0) > 0")
    if not p[1] > 0:
        raise ConditionError("positivity fails at l = 1: p(1) = 0")
    if not r > R_MIN:
        raise ErgocertError(f"rate must exceed {R_MIN}")
    return coupling_constants_from_bounds(
        r, upsilon, ctx.log(a[0]), ctx.log(p[1]), _pmin_from_pmf(p)
    )


def kendall_constants(p: Pmf, r: float) -> CouplingConstants:
    """Constants of the explicit renewal bound |u(n) - 1/m| <= M* e^{-kappa n}."""
    p.require_increment()
    return coupling_constants(Pmf.delta(0), p, r, upsilon_star(p, r))


def kendall_bound(p: Pmf, r: float) -> tuple[LogReal, LogReal]:
    """(M*, kappa) with |u(n) - 1/E Y| <= M* e^{-kappa n} for every n >= 2."""
    c = kendall_constants(p, r)
    return c.m_star, c.kappa


def best_rate(p: Pmf, r_grid: Sequence[float] | None = None) -> CouplingConstants:
    """Grid-search the rate to maximize kappa; rates that fail are skipped."""
    if r_grid is None:
        r_grid = np.geomspace(1e-3, 3.0, 25)
    best = None
    errors = []
    for r in r_grid:
        try:
            c = kendall_constants(p, float(r))
        except ErgocertError as exc:
            errors.append(f"r={r:.4g}: {exc}")
            continue
        if best is None or c.kappa > best.kappa:
            best = c
    if best is None:
        raise ConditionError("no rate in the grid gives a valid bound; " + "; ".join(errors[:3]))
    return best
