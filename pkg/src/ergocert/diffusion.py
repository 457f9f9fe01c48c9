"""Certificates for one-dimensional ergodic diffusions dy = S(y) dt + sigma(y) dW.

The unit-time skeleton y_0, y_1, ... is treated as a Markov chain: the
Lyapunov function V(x) = (1 + x^2)^eps gives the drift constants, a
Girsanov lower bound on the transition density gives the minorization, and
:func:`ergocert.certificate.certificate_assemble` turns both into (kappa, R).
The module also provides the invariant density by quadrature and an
Euler-Maruyama simulator for Monte Carlo cross-checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from ergocert._logspace import LogReal, ctx, to_jsonable
from ergocert._parallel import run_blocks
from ergocert.certificate import (
    Certificate,
    DriftParams,
    LedgerEntry,
    MinorizationParams,
    certificate_assemble,
)
from ergocert.errors import ClassMembershipError, ConditionError, ErgocertError

Fn = Callable[[np.ndarray], np.ndarray]
GRID_POINTS = 100_001
DRIFT_TOL = 1e-9


@dataclass(frozen=True)
class DriftClassParams:
    """The drift class: |S| <= M on |x| <= a and -L <= S' <= -1/L on |x| >= a."""

    m_bound: float
    a_radius: float
    l_param: float
    epsilon: float

    def __post_init__(self):
        if not self.m_bound > 0:
            raise ErgocertError("M must be positive")
        if not self.a_radius > 0:
            raise ErgocertError("a must be positive")
        if not self.l_param >= 1:
            raise ErgocertError("L must be >= 1")
        if not 0 < self.epsilon <= 1:
            raise ErgocertError("epsilon must lie in (0, 1]")


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class DiffusionModel:
    """Drift S, diffusion coefficient sigma and the bounds the certificate needs.

    ``s_deriv_compact_bound`` is a caller-certified bound on |S'| over the
    compact on which the minorization constant is evaluated.  ``breakpoints``
    lists points where S is not smooth; quadrature splits there.
    """

    drift: Fn
    drift_derivative: Fn
    sigma: Fn
    sigma0: float
    sigma1_: float
    s_deriv_compact_bound: float
    sigma_derivative: Fn = _zero
    sigma_second_derivative: Fn = _zero
    constant_sigma: bool = False
    breakpoints: tuple[float, ...] = ()
    spec: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0 < self.sigma0 <= self.sigma1_:
            raise ErgocertError("need 0 < sigma0 <= sigma1")
        if not (math.isfinite(self.s_deriv_compact_bound) and self.s_deriv_compact_bound >= 0):
            raise ErgocertError("s_deriv_compact_bound must be a finite bound on |S'|")

    # Lamperti transform f(x) = int_0^x du / sigma(u) and its inverse g

    def f(self, x):
        x = np.asarray(x, dtype=float)
        if self.constant_sigma:
            return x / float(self.sigma(0.0))
        out = np.array([integrate.quad(lambda u: 1.0 / float(self.sigma(u)), 0.0, xi)[0] for xi in x.ravel()])
        return out.reshape(x.shape)

    def f_inverse(self, z):
        z = np.asarray(z, dtype=float)
        if self.constant_sigma:
            return z * float(self.sigma(0.0))
        out = []
        for zi in z.ravel():
            lo, hi = sorted((zi * self.sigma0, zi * self.sigma1_))
            if lo == hi:
                out.append(lo)
                continue
            out.append(optimize.brentq(lambda x: float(self.f(x)) - zi, lo, hi, xtol=1e-14))
        return np.array(out).reshape(z.shape)

    def s_tilde(self, z):
        x = self.f_inverse(z)
        return self.drift(x) / self.sigma(x) - 0.5 * self.sigma_derivative(x)


def _piecewise_linear(knots, values):
    knots = np.asarray(knots, dtype=float)
    values = np.asarray(values, dtype=float)
    if knots.size < 2 or np.any(np.diff(knots) <= 0):
        raise ErgocertError("piecewise_linear knots must be strictly increasing (at least two)")
    slopes = np.diff(values) / np.diff(knots)

    def seg(x):
        return np.clip(np.searchsorted(knots, x, side="right") - 1, 0, slopes.size - 1)

    def drift(x):
        x = np.asarray(x, dtype=float)
        i = seg(x)
        return values[i] + slopes[i] * (x - knots[i])

    def deriv(x):
        return slopes[seg(np.asarray(x, dtype=float))]

    return drift, deriv


def _tabulated(xs, s, ds):
    xs, s, ds = (np.asarray(v, dtype=float) for v in (xs, s, ds))
    if xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise ErgocertError("tabulated x must be strictly increasing (at least two points)")
    spline = CubicHermiteSpline(xs, s, ds)
    dspline = spline.derivative()

    def drift(x):
        x = np.asarray(x, dtype=float)
        inner = spline(np.clip(x, xs[0], xs[-1]))
        # linear continuation with the end slopes
        return inner + np.where(x < xs[0], ds[0] * (x - xs[0]), 0.0) + np.where(x > xs[-1], ds[-1] * (x - xs[-1]), 0.0)

    def deriv(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < xs[0], ds[0], np.where(x > xs[-1], ds[-1], dspline(np.clip(x, xs[0], xs[-1]))))

    return drift, deriv


def model_from_json(obj: dict) -> tuple[DiffusionModel, DriftClassParams]:
    """Build a model and its drift class from the JSON model specification."""
    try:
        d = obj["drift"]
        kind = d["kind"]
        breaks = ()
        if kind == "ou":
            theta, mu = float(d.get("theta", 1.0)), float(d.get("mu", 0.0))
            drift = lambda x: -theta * (np.asarray(x, dtype=float) - mu)  # noqa: E731
            deriv = lambda x: np.full_like(np.asarray(x, dtype=float), -theta)  # noqa: E731
        elif kind == "piecewise_linear":
            drift, deriv = _piecewise_linear(d["knots"], d["values"])
            breaks = tuple(float(k) for k in d["knots"])
        elif kind == "tabulated":
            table = np.asarray(d["table"], dtype=float)
            if table.ndim != 2 or table.shape[1] != 3:
                raise ErgocertError("tabulated drift needs (x, S, dS) triples")
            drift, deriv = _tabulated(table[:, 0], table[:, 1], table[:, 2])
            breaks = tuple(float(k) for k in table[:, 0])
        else:
            raise ErgocertError(f"unknown drift kind {kind!r}")

        s = obj.get("sigma", {"kind": "constant", "value": 1.0})
        if s["kind"] == "constant":
            v = float(s["value"])
            sigma = lambda x: np.full_like(np.asarray(x, dtype=float), v)  # noqa: E731
            extra = dict(sigma0=v, sigma1_=v, constant_sigma=True)
        elif s["kind"] == "sinusoidal":
            base, amp, w = float(s["base"]), float(s["amplitude"]), float(s.get("freq", 1.0))
            sigma = lambda x: base + amp * np.sin(w * np.asarray(x, dtype=float))  # noqa: E731
            extra = dict(
                sigma0=base - abs(amp),
                sigma1_=base + abs(amp),
                sigma_derivative=lambda x: amp * w * np.cos(w * np.asarray(x, dtype=float)),
                sigma_second_derivative=lambda x: -amp * w * w * np.sin(w * np.asarray(x, dtype=float)),
            )
        else:
            raise ErgocertError(f"unknown sigma kind {s['kind']!r}")

        c = obj["class"]
        cls = DriftClassParams(float(c["M"]), float(c["a"]), float(c["L"]), float(c["epsilon"]))
        model = DiffusionModel(
            drift, deriv, sigma, s_deriv_compact_bound=float(obj["s_deriv_compact_bound"]), breakpoints=breaks,
            spec=obj, **extra
        )
    except KeyError as exc:
        raise ErgocertError(f"model specification is missing {exc}") from exc
    return model, cls


def load_model(path) -> tuple[DiffusionModel, DriftClassParams]:
    with open(path) as fh:
        return model_from_json(json.load(fh))


# Lyapunov function V(x) = (1 + x^2)^eps and its derivatives

def lyapunov_v(x, eps):
    return np.power(1.0 + np.square(x), eps)


def lyapunov_dv(x, eps):
    return 2.0 * eps * x * np.power(1.0 + np.square(x), eps - 1.0)


def lyapunov_d2v(x, eps):
    q = 1.0 + np.square(x)
    return 2.0 * eps * np.power(q, eps - 1.0) + 4.0 * eps * (eps - 1.0) * np.square(x) * np.power(q, eps - 2.0)


def _grid_sup(fn: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, n: int = GRID_POINTS):
    """sup of ``fn`` on [lo, hi]: dense grid, then bounded refinement next to the best node."""
    xs = np.linspace(lo, hi, n)
    vals = fn(xs)
    i = int(np.argmax(vals))
    best_x, best = float(xs[i]), float(vals[i])
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, n - 1)]
    if b > a:
        res = optimize.minimize_scalar(lambda t: -float(fn(np.array([t]))[0]), bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-12})
        if res.success and -res.fun > best:
            best_x, best = float(res.x), float(-res.fun)
    return best, best_x


def lyapunov_params(cls: DriftClassParams, sigma1_: float, sigma: Fn | None = None):
    """(gamma, beta, x_star, x_argmax) for V = (1 + x^2)^eps over the drift class.

    Without ``sigma`` the diffusion term is bounded using sigma1 alone.
    """
    eps, L, M, a = cls.epsilon, cls.l_param, cls.m_bound, cls.a_radius
    gamma = eps / (2.0 * L)
    x_star = max(2.0 * L * (M + a * L), math.sqrt(1.0 + 2.0 * L * sigma1_**2))
    drift_cap = M + L * x_star

    def bracket(x):
        d2 = lyapunov_d2v(x, eps)
        if sigma is None:
            diff = 0.5 * sigma1_**2 * np.maximum(d2, 0.0)
        else:
            diff = 0.5 * np.square(sigma(x)) * d2
        return np.abs(lyapunov_dv(x, eps)) * drift_cap + diff + gamma * lyapunov_v(x, eps)

    beta, x_arg = _grid_sup(bracket, -x_star, x_star)
    return gamma, beta, x_star, x_arg


@dataclass(frozen=True)
class LyapunovReport:
    gamma: float
    beta: float
    x_star: float
    rho: float
    d_const: float
    k_radius: float
    grid_violations: int
    worst_x: float
    worst_margin: float
    beta_argmax: float
    degenerate_k: bool = False

    @property
    def passed(self) -> bool:
        return self.grid_violations == 0

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__} | {"passed": self.passed}


def class_check(model: DiffusionModel, cls: DriftClassParams) -> None:
    """Grid check of class membership and of the sigma bounds; raises on failure."""
    x_star = max(2 * cls.l_param * (cls.m_bound + cls.a_radius * cls.l_param),
                 math.sqrt(1 + 2 * cls.l_param * model.sigma1_**2))
    xs = np.linspace(-10 * x_star, 10 * x_star, GRID_POINTS)
    sig = model.sigma(xs)
    if np.any(sig < model.sigma0 - 1e-12) or np.any(sig > model.sigma1_ + 1e-12):
        raise ClassMembershipError("sigma leaves [sigma0, sigma1] on the grid")
    inner = np.abs(xs) <= cls.a_radius
    s = model.drift(xs)
    if np.any(np.abs(s[inner]) > cls.m_bound + 1e-12):
        i = np.flatnonzero(inner)[np.argmax(np.abs(s[inner]))]
        raise ClassMembershipError(f"|S(x)| > M at x = {xs[i]!r}")
    ds = model.drift_derivative(xs[~inner])
    bad = (ds < -cls.l_param - 1e-12) | (ds > -1.0 / cls.l_param + 1e-12)
    if bad.any():
        x_bad = xs[~inner][np.argmax(bad)]
        raise ClassMembershipError(f"S'(x) outside [-L, -1/L] at x = {x_bad!r}")


def drift_check(model: DiffusionModel, cls: DriftClassParams) -> LyapunovReport:
    """Verify the generator inequality on a grid and derive (rho, D, K)."""
    class_check(model, cls)
    eps = cls.epsilon
    gamma, beta, x_star, x_arg = lyapunov_params(cls, model.sigma1_, model.sigma)
    xs = np.linspace(-10 * x_star, 10 * x_star, GRID_POINTS)
    gen = lyapunov_dv(xs, eps) * model.drift(xs) + 0.5 * np.square(model.sigma(xs)) * lyapunov_d2v(xs, eps)
    margin = gen - (-gamma * lyapunov_v(xs, eps) + beta)
    violations = int(np.count_nonzero(margin > DRIFT_TOL))
    i = int(np.argmax(margin))
    rho = -math.expm1(-gamma / 2)
    d_const = beta / gamma
    thr = d_const / (math.exp(-gamma / 2) - math.exp(-gamma))
    degenerate = thr <= 1.0
    k_radius = 0.0 if degenerate else math.sqrt(thr ** (1.0 / eps) - 1.0)
    return LyapunovReport(gamma, beta, x_star, rho, d_const, k_radius, violations,
                          float(xs[i]), float(margin[i]), x_arg, degenerate)


def brownian_max_prob(k: float, tol: float = 1e-12):
    """P(max_{0<=u<=1} |w_u| <= k) by the alternating eigenfunction series.

    The result is a lower bound within ``tol`` of the exact value.
    """
    if not k > 0:
        return ctx.zero
    k = ctx.mpf(k)
    c = ctx.pi**2 / (8 * k * k)
    total = ctx.zero
    n = 1
    while True:
        term = ctx.exp(-n * n * c) / n
        negative = (n // 2) % 2 == 1
        total += -term if negative else term
        # terms decrease, so stopping after a subtracted term leaves a lower bound
        if term < tol and negative:
            break
        n += 2
    return min(ctx.one, 4 / ctx.pi * total)


@dataclass(frozen=True)
class MinorizationResult:
    delta_k: LogReal
    nu_density: Callable = field(repr=False)
    c_interval: tuple[float, float] = (0.0, 0.0)
    k_f: float = 0.0
    v1: LogReal = None
    v2: float = 0.0
    v3: float = 0.0
    notes: tuple[str, ...] = ()


def minorization_params(k_radius: float, model: DiffusionModel) -> MinorizationResult:
    """delta_K and nu_K for the small set {x : |f(x)| <= K_f}, K_f = max(f(K), -f(-K))."""
    if not k_radius > 0:
        raise ErgocertError("K must be positive")
    k_f = float(max(model.f(k_radius), -model.f(-k_radius)))
    notes = []
    v1 = brownian_max_prob(k_f)

    # |B(S)| <= |dS~/dz| + S~^2 on |z| <= 3 K_f
    x_lo, x_hi = (float(v) for v in model.f_inverse(np.array([-3 * k_f, 3 * k_f])))

    def s_tilde_x(x):
        return model.drift(x) / model.sigma(x) - 0.5 * model.sigma_derivative(x)

    sq_sup, _ = _grid_sup(lambda x: np.square(s_tilde_x(x)), x_lo, x_hi)
    extra = 0.0
    if not model.constant_sigma:
        # dS~/dz = S' - S sigma'/sigma - sigma sigma''/2
        corr, _ = _grid_sup(
            lambda x: np.abs(model.drift(x) * model.sigma_derivative(x) / model.sigma(x))
            + 0.5 * np.abs(model.sigma(x) * model.sigma_second_derivative(x)),
            x_lo, x_hi,
        )
        extra = corr
    b_sup = model.s_deriv_compact_bound + extra + sq_sup
    pos = integrate.quad(lambda z: abs(float(model.s_tilde(z))), 0.0, k_f, limit=200)[0]
    neg = integrate.quad(lambda z: abs(float(model.s_tilde(z))), -k_f, 0.0, limit=200)[0]
    v2 = b_sup + 2.0 * max(pos, neg)
    if not math.isfinite(v2):
        raise ErgocertError("v2 is not finite: supply a finite bound on |S'| over the compact")

    c_lo, c_hi = (float(v) for v in model.f_inverse(np.array([-k_f, k_f])))
    # split at the peak f(0) = 0 and drop |f| > 40 (mass below e^{-800}) so wide sets keep the peak
    cut_lo, cut_hi = (float(v) for v in model.f_inverse(np.array([-40.0, 40.0])))
    weight = lambda t: math.exp(-0.5 * float(model.f(t)) ** 2)  # noqa: E731
    v3 = (integrate.quad(weight, max(c_lo, cut_lo), 0.0, limit=200)[0]
          + integrate.quad(weight, 0.0, min(c_hi, cut_hi), limit=200)[0])

    def nu_density(y):
        y = np.asarray(y, dtype=float)
        inside = (y >= c_lo) & (y <= c_hi)
        return np.where(inside, np.exp(-0.5 * np.square(model.f(y))) / v3, 0.0)

    log_delta = ctx.log(v1) + ctx.log(v3) - v2 - ctx.log(2 * ctx.pi) / 2 - ctx.log(model.sigma1_)
    if log_delta >= -ctx.log(2):
        # P >= delta_K nu stays true for any smaller constant
        log_delta = -ctx.log(2) - ctx.log(2)
        notes.append("delta_K >= 1/2 was rescaled to 1/4")
    return MinorizationResult(LogReal(log_delta), nu_density, (c_lo, c_hi), k_f, LogReal.of(v1), v2, v3, tuple(notes))


@dataclass(frozen=True)
class InvariantDensity:
    """Invariant density of the diffusion, normalized by quadrature with a certified tail."""

    model: DiffusionModel
    x_cut: float
    normalizer: float
    tail_bound: float

    def log_unnormalized(self, x):
        return _log_speed(self.model, x)

    def pdf(self, x):
        return np.exp(self.log_unnormalized(x)) / self.normalizer

    def expect(self, g: Callable, g_bound: float = 1.0) -> float:
        """pi(g) for bounded ``g``; the neglected tail contributes at most g_bound * tail_bound."""
        val = integrate.quad(lambda t: float(g(t)) * float(self.pdf(np.array([t]))[0]),
                             -self.x_cut, self.x_cut, limit=400, epsabs=1e-13, epsrel=1e-12)[0]
        return val

    @cached_property
    def _cdf_table(self):
        xs = np.linspace(-self.x_cut, self.x_cut, 4001)
        dens = lambda t: float(self.pdf(np.array([t]))[0])  # noqa: E731
        pieces = [integrate.quad(dens, lo, hi, epsabs=1e-14)[0] for lo, hi in zip(xs[:-1], xs[1:])]
        cum = np.concatenate([[0.0], np.cumsum(pieces)])
        return PchipInterpolator(xs, np.clip(cum, 0.0, 1.0))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.clip(x, -self.x_cut, self.x_cut)
        return np.where(x <= -self.x_cut, 0.0, np.where(x >= self.x_cut, 1.0, self._cdf_table(inside)))


def _log_speed(model: DiffusionModel, x):
    """ln of sigma^{-2}(x) exp(2 int_0^x S/sigma^2), the inner integral by adaptive quadrature."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    integrand = lambda v: 2.0 * float(model.drift(v)) / float(model.sigma(v)) ** 2  # noqa: E731
    order = np.argsort(x)
    xs = x[order]
    psi = np.empty_like(xs)
    # integrate outward from 0 between consecutive points on each side
    for side in (xs >= 0, xs < 0):
        idx = np.flatnonzero(side)
        if not idx.size:
            continue
        pts = xs[idx] if xs[idx[0]] >= 0 else xs[idx][::-1]
        ids = idx if xs[idx[0]] >= 0 else idx[::-1]
        prev, acc = 0.0, 0.0
        for j, p in zip(ids, pts):
            lo, hi = sorted((prev, p))
            inner = [k for k in model.breakpoints if lo < k < hi] or None
            acc += integrate.quad(integrand, prev, p, epsabs=1e-14, epsrel=1e-13, limit=200, points=inner)[0]
            psi[j] = acc
            prev = p
    out = np.empty_like(x)
    out[order] = psi - 2.0 * np.log(model.sigma(xs))
    return out


def invariant_density(model: DiffusionModel, cls: DriftClassParams, tol: float = 1e-14) -> InvariantDensity:
    """Normalize the speed density; the cut is widened until the Gaussian tail bound is below ``tol``."""
    L, M, a = cls.l_param, cls.m_bound, cls.a_radius
    # beyond b the drift is below -(|x| - b)/L in the outward direction
    b = a + L * M
    log_h_b = _log_speed(model, np.array([-b, b])) + 2.0 * np.log(model.sigma(np.array([-b, b])))
    scale = model.sigma1_ * math.sqrt(L)

    def tail(x_cut):
        # int_{x_cut}^inf sigma0^-2 exp(psi(b) - (x-b)^2 / (L sigma1^2)) dx, both sides
        each = math.sqrt(math.pi) * scale / 2 * special.erfc((x_cut - b) / scale)
        return float(np.sum(np.exp(log_h_b))) * each / model.sigma0**2

    x_cut = b + 4.0 * scale
    f = lambda t: float(np.exp(_log_speed(model, np.array([t]))[0]))  # noqa: E731

    def normalizer(cut):
        inner = [k for k in model.breakpoints if -cut < k < cut] or None
        return integrate.quad(f, -cut, cut, limit=400, epsabs=1e-14, epsrel=1e-13, points=inner)[0]

    z = normalizer(x_cut)
    while tail(x_cut) > tol * z:
        x_cut *= 1.5
        z = normalizer(x_cut)
    return InvariantDensity(model, x_cut, z, float(tail(x_cut) / z))


@dataclass(frozen=True)
class SkeletonSample:
    skeleton: np.ndarray  # (n_paths, floor(t_end) + 1)
    final: np.ndarray  # (n_paths,)
    seed: int


def euler_simulate(
    model: DiffusionModel,
    x0,
    t_end: float,
    dt: float = 1e-3,
    seed: int = 0,
    n_paths: int = 1,
    *,
    noise_scale: float = 1.0,
) -> SkeletonSample:
    """Euler-Maruyama paths, recorded at integer times and at ``t_end``.

    ``x0`` is a scalar or one start per path.  ``noise_scale = 0`` switches
    the noise off (a test-only degenerate case).
    """
    if not 0 < dt <= 1e-2:
        raise ErgocertError("dt must lie in (0, 1e-2]")
    per_unit = round(1.0 / dt)
    if abs(per_unit * dt - 1.0) > 1e-9:
        raise ErgocertError("1/dt must be an integer so that integer times fall on the grid")
    n_units = int(math.floor(t_end + 1e-12))
    rest = int(round((t_end - n_units) / dt))
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (n_paths,))
    sqdt = math.sqrt(dt)

    def step(y, rng):
        return y + model.drift(y) * dt + noise_scale * model.sigma(y) * sqdt * rng.standard_normal(y.size)

    def simulate(rng, start, size):
        y = x0[start:start + size].copy()
        skel = np.empty((size, n_units + 1))
        skel[:, 0] = y
        for unit in range(n_units):
            for _ in range(per_unit):
                y = step(y, rng)
            if not np.all(np.abs(y) < 1e10):
                raise ErgocertError("Euler path exceeded 1e10: the drift is likely outside the class")
            skel[:, unit + 1] = y
        for _ in range(rest):
            y = step(y, rng)
        return skel, y

    results = run_blocks(simulate, seed, n_paths)
    skel = np.concatenate([r[0] for r in results])
    final = np.concatenate([r[1] for r in results])
    return SkeletonSample(skel, final, seed)


@dataclass(frozen=True)
class DiffusionCertificate:
    report: LyapunovReport
    minorization: MinorizationResult
    chain: Certificate
    v_star: float
    kappa: LogReal
    r_big: LogReal
    ledger: tuple[LedgerEntry, ...]

    def log_bound(self, t: float, x0: float, epsilon: float):
        """ln(R e^{-kappa floor(t)} (1 + x0^2)^eps)."""
        return self.chain.log_bound(math.floor(t), 1.0) - self.chain.r_big.log + self.r_big.log + \
            epsilon * ctx.log(1 + ctx.mpf(x0) ** 2)

    def to_json(self) -> dict:
        kappa, log_kappa = to_jsonable(self.kappa)
        r_big, log_r = to_jsonable(self.r_big)
        return {
            "kappa": kappa,
            "R": r_big,
            "log_kappa": log_kappa,
            "log_R": log_r,
            "lyapunov": self.report.to_json(),
            "small_set": list(self.minorization.c_interval),
            "ledger": [e.to_json() for e in self.ledger],
            "notes": list(self.chain.notes + self.minorization.notes),
        }


def certify_diffusion(cls: DriftClassParams, model: DiffusionModel) -> DiffusionCertificate:
    """(kappa, R) with |E g(y_t) - pi(g)| <= R e^{-kappa floor(t)} (1 + x^2)^eps for sup|g| <= 1."""
    report = drift_check(model, cls)
    if not report.passed:
        raise ConditionError(
            f"drift check failed at {report.grid_violations} grid points "
            f"(worst x = {report.worst_x!r}, margin {report.worst_margin!r})"
        )
    if report.degenerate_k:
        raise ConditionError("K = 0: the small set degenerates to a point")
    minor = minorization_params(report.k_radius, model)
    c_lo, c_hi = minor.c_interval
    v_star = float(max(lyapunov_v(c_lo, cls.epsilon), lyapunov_v(c_hi, cls.epsilon)))
    # the minorization gives P >= delta_K nu, the chain pipeline wants 2 delta nu
    delta = LogReal(minor.delta_k.log - ctx.log(2))
    chain = certificate_assemble(DriftParams(report.rho, report.d_const, v_star), MinorizationParams(delta))
    r_big = 2 * chain.r_big
    head = [
        LedgerEntry("gamma_lyap", LogReal.of(report.gamma), "gamma = eps / (2L)"),
        LedgerEntry("beta", LogReal.of(report.beta),
                    "beta = sup_{|x|<=x*} |V'(x)| (M + L x*) + sigma^2 V''/2 + gamma V"),
        LedgerEntry("x_star", LogReal.of(report.x_star), "x* = max(2L(M + aL), sqrt(1 + 2 L sigma1^2))"),
        LedgerEntry("rho", LogReal.of(report.rho), "rho = 1 - e^{-gamma/2}"),
        LedgerEntry("D", LogReal.of(report.d_const), "D = beta / gamma"),
        LedgerEntry("K", LogReal.of(report.k_radius),
                    "K = sqrt(((beta/gamma) / (e^{-gamma/2} - e^{-gamma}))^{1/eps} - 1)"),
        LedgerEntry("K_f", LogReal.of(minor.k_f), "K_f = max(f(K), -f(-K))"),
        LedgerEntry("V_star", LogReal.of(v_star), "V* = sup_{|f(x)| <= K_f} (1 + x^2)^eps"),
        LedgerEntry("v1", minor.v1, "v1 = P(max_{u<=1} |w_u| <= K_f)"),
        LedgerEntry("v2", LogReal.of(minor.v2),
                    "v2 = sup_{|z|<=3K_f} (|S~'| + S~^2) + 2 max(int_0^{K_f} |S~|, int_{-K_f}^0 |S~|)"),
        LedgerEntry("v3", LogReal.of(minor.v3), "v3 = int_C e^{-f^2/2}"),
        LedgerEntry("delta_K", minor.delta_k, "delta_K = v1 v3 e^{-v2} / (sqrt(2 pi) sigma1)"),
        LedgerEntry("delta", delta, "delta = delta_K / 2"),
    ]
    tail = [LedgerEntry("R_sup", r_big, "R_sup = 2 R (g = g+ - g-, each in [0, 1])")]
    return DiffusionCertificate(report, minor, chain, v_star, chain.kappa, r_big,
                                tuple(head) + chain.ledger + tuple(tail))
