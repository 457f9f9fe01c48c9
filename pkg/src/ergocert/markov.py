"""Exact finite-chain analysis and Monte Carlo of the coupled renewal processes."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from ergocert._logspace import LogReal, ctx, format_log, logsubexp
from ergocert._parallel import run_blocks
from ergocert.errors import ErgocertError, HorizonWarning, ReducibleChainError
from ergocert.renewal import Pmf
from ergocert.split import FiniteChain

DEFAULT_HORIZON = 10**6


def invariant_exact(chain: FiniteChain) -> np.ndarray:
    """Unique invariant law of an irreducible finite chain."""
    P = chain.transition
    n = chain.n_states
    n_comp, _ = connected_components(P > 0, directed=True, connection="strong")
    if n_comp != 1:
        raise ReducibleChainError(f"chain has {n_comp} communicating classes")
    A = P.T - np.eye(n)
    A[-1] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = scipy.linalg.solve(A, rhs)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    # one refinement step pulls the residual to rounding level
    pi = pi @ P
    return pi / pi.sum()


def _v_norm_sup(mu: np.ndarray, v: np.ndarray) -> float:
    # sup_{1<=f<=v} |sum mu f|: the linear objective peaks at a vertex of the box
    pos = mu > 0
    hi = math.fsum(mu[pos] * v[pos]) + math.fsum(mu[~pos])
    lo = math.fsum(mu[pos]) + math.fsum(mu[~pos] * v[~pos])
    return max(hi, -lo, 0.0)


def _check_v(v, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ErgocertError("V needs one value per state")
    if not np.all(v >= 1.0):
        raise ErgocertError("V must be >= 1 everywhere")
    return v


def exact_deviation(chain: FiniteChain, v, x: int, n: int, pi: np.ndarray | None = None) -> float:
    """sup over 1 <= f <= V of |E_x f(X_n) - pi(f)|."""
    v = _check_v(v, chain.n_states)
    if pi is None:
        pi = invariant_exact(chain)
    row = np.linalg.matrix_power(chain.transition, n)[x]
    return _v_norm_sup(row - pi, v)


def deviation_curve(chain: FiniteChain, v, x: int, n_max: int, pi: np.ndarray | None = None) -> np.ndarray:
    """exact_deviation for n = 0..n_max in one forward pass."""
    v = _check_v(v, chain.n_states)
    if pi is None:
        pi = invariant_exact(chain)
    out = np.empty(n_max + 1)
    row = np.zeros(chain.n_states)
    row[x] = 1.0
    for n in range(n_max + 1):
        out[n] = _v_norm_sup(row - pi, v)
        row = row @ chain.transition
    return out


def _fmt_float(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class DeviationReport:
    n: int
    exact_dev: float
    log_bound: object  # mpf: ln(R e^{-kappa n} V(x))

    @property
    def bound(self) -> float:
        return float(LogReal(self.log_bound))

    @property
    def dominated(self) -> bool:
        return self.exact_dev == 0.0 or ctx.log(self.exact_dev) <= self.log_bound

    @property
    def slack(self) -> float:
        return self.bound - self.exact_dev

    def slack_text(self) -> str:
        b = self.bound
        if math.isfinite(b) and b > 0:
            return _fmt_float(b - self.exact_dev)
        if self.exact_dev == 0.0:
            return format_log(self.log_bound)
        if self.dominated and ctx.log(self.exact_dev) < self.log_bound:
            return format_log(logsubexp(self.log_bound, ctx.log(self.exact_dev)))
        return _fmt_float(b - self.exact_dev)

    def bound_text(self) -> str:
        b = self.bound
        if math.isfinite(b) and b > 0:
            return _fmt_float(b)
        return format_log(self.log_bound)


def deviation_reports(chain: FiniteChain, v, x: int, n_max: int, kappa, r_big) -> list[DeviationReport]:
    """Exact deviations against R e^{-kappa n} V(x) for n = 0..n_max."""
    v = _check_v(v, chain.n_states)
    kappa = LogReal.coerce(kappa)
    r_big = LogReal.coerce(r_big)
    dev = deviation_curve(chain, v, x, n_max)
    k = kappa.value if kappa.log > -10_000 else ctx.zero
    base = r_big.log + ctx.log(v[x])
    return [DeviationReport(n, float(dev[n]), base - k * n) for n in range(n_max + 1)]


def reports_to_csv(reports: list[DeviationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "exact_dev", "bound", "slack"])
    for rep in reports:
        w.writerow([rep.n, _fmt_float(rep.exact_dev), rep.bound_text(), rep.slack_text()])
    return buf.getvalue()


def exact_uc(chain: FiniteChain, v, c_set, r: float) -> np.ndarray:
    """U_C(x) = E_x sum_{j=1}^{tau_C} e^{rj} V(X_j), exactly; ``inf`` where it diverges."""
    P = chain.transition
    n = chain.n_states
    v = _check_v(v, n)
    in_c = np.zeros(n, dtype=bool)
    in_c[list(c_set)] = True
    out = np.flatnonzero(~in_c)
    pv = P @ v
    er = math.exp(r)
    if out.size == 0:
        return er * pv
    P_oo = P[np.ix_(out, out)]
    if out.size and er * max(abs(np.linalg.eigvals(P_oo))) >= 1.0:
        return np.full(n, np.inf)
    h_out = scipy.linalg.solve(np.eye(out.size) - er * P_oo, er * pv[out])
    return er * (pv + P[:, out] @ h_out)


def simulate_chain(chain: FiniteChain, x0: int, n: int, seed: int) -> np.ndarray:
    """A path X_0..X_n drawn with a Philox stream keyed by ``seed``."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    cdf = np.cumsum(chain.transition, axis=1)
    last = chain.n_states - 1
    u = rng.random(n)
    path = np.empty(n + 1, dtype=np.int64)
    path[0] = x = int(x0)
    for i in range(n):
        x = min(int(np.searchsorted(cdf[x], u[i], side="right")), last)
        path[i + 1] = x
    return path


class _Sampler:
    """Inverse-CDF draws from a Pmf; tail mass (if any) goes to the largest stored index."""

    def __init__(self, f: Pmf):
        self.cdf = np.cumsum(f.masses)
        self.offset = f.support_offset
        self.last = f.masses.size - 1

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = np.searchsorted(self.cdf, rng.random(size), side="right")
        return np.minimum(idx, self.last) + self.offset


def _advance(w: np.ndarray, steps: np.ndarray, p: _Sampler, rng) -> np.ndarray:
    """Forward-recurrence chain values after ``steps`` further transitions."""
    w = w.copy()
    stay = w > steps
    w[stay] -= steps[stay]
    idx = np.flatnonzero(~stay)
    rem = steps[idx] - w[idx]
    fresh = p.draw(rng, idx.size)
    while True:
        over = fresh <= rem
        if not over.any():
            break
        rem[over] -= fresh[over]
        fresh[over] = p.draw(rng, int(over.sum()))
    w[idx] = fresh - rem
    return w


def _coupling_block(a: _Sampler, b: _Sampler, p: _Sampler, horizon: int):
    def run(rng: np.random.Generator, start: int, size: int):
        # W_0 = Y_0 if Y_0 > 0 else Y_1, and likewise for W'_0
        w = a.draw(rng, size)
        zero = w == 0
        w[zero] = p.draw(rng, int(zero.sum()))
        wp = b.draw(rng, size)
        zero = wp == 0
        wp[zero] = p.draw(rng, int(zero.sum()))

        # sigma_1: W_0 = 1 gives a fresh increment, otherwise W_0 - 1
        sigma1 = np.where(w == 1, 0, w - 1)
        ones = np.flatnonzero(w == 1)
        sigma1[ones] = p.draw(rng, ones.size)

        varpi = np.zeros(size, dtype=np.int64)
        tau = np.zeros(size, dtype=np.int64)
        censored = np.zeros(size, dtype=bool)
        z = wp
        t = np.zeros(size, dtype=np.int64)
        active = np.arange(size)
        step = sigma1.astype(np.int64)
        while active.size:
            z_new = _advance(z[active], step, p, rng)
            t[active] += step
            varpi[active] += 1
            z[active] = z_new
            done = z_new == 1
            over = (t[active] > horizon) & ~done
            tau[active[done]] = t[active[done]]
            tau[active[over]] = t[active[over]]
            censored[active[over]] = True
            active = active[~(done | over)]
            step = p.draw(rng, active.size).astype(np.int64)
        return sigma1.astype(np.int64), varpi, tau, censored

    return run


def _log_mean_and_stderr(log_x: np.ndarray) -> tuple[float, float]:
    """Mean and standard error of exp(log_x), with the exponentials rescaled by their max."""
    n = log_x.size
    m = float(log_x.max())
    scaled = np.exp(log_x - m)
    mean_s = math.fsum(scaled) / n
    var_s = math.fsum((scaled - mean_s) ** 2) / max(n - 1, 1)
    scale = math.exp(m) if m < 709 else math.inf
    return mean_s * scale, math.sqrt(var_s / n) * scale


@dataclass(frozen=True)
class CouplingEstimates:
    mean_exp_r_sigma1: float
    stderr_exp_r_sigma1: float
    mean_exp_gamma1_varpi: float
    stderr_exp_gamma1_varpi: float
    tail_tau: np.ndarray = field(repr=False)
    n_paths: int
    seed: int
    r: float
    gamma1: float
    n_censored: int
    sigma1: np.ndarray = field(repr=False)
    varpi: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "n_paths": self.n_paths,
            "r": self.r,
            "gamma1": self.gamma1,
            "mean_exp_r_sigma1": self.mean_exp_r_sigma1,
            "stderr_exp_r_sigma1": self.stderr_exp_r_sigma1,
            "mean_exp_gamma1_varpi": self.mean_exp_gamma1_varpi,
            "stderr_exp_gamma1_varpi": self.stderr_exp_gamma1_varpi,
            "n_censored": self.n_censored,
            "tail_tau": self.tail_tau.tolist(),
        }


def simulate_coupling(
    a: Pmf,
    b: Pmf,
    p: Pmf,
    n_paths: int,
    horizon: int = DEFAULT_HORIZON,
    seed: int = 0,
    *,
    r: float = 0.0,
    gamma1: float = 0.0,
    tail_len: int = 200,
) -> CouplingEstimates:
    """Simulate the two forward-recurrence chains until their first joint visit to 1.

    The embedded chain Z_k = W'_{sigma_k} is advanced directly between the
    visits of W to 1, which is exact because W' is Markov and independent of W.
    """
    if not a[0] > 0:
        raise ErgocertError("the delay law a needs a(0) > 0")
    p.require_increment()
    run = _coupling_block(_Sampler(a), _Sampler(b), _Sampler(p), horizon)
    parts = run_blocks(run, seed, n_paths)
    sigma1, varpi, tau, censored = (np.concatenate(col) for col in zip(*parts))
    n_cens = int(censored.sum())
    if n_cens > 1e-3 * n_paths:
        warnings.warn(f"{n_cens} of {n_paths} paths hit the horizon {horizon}", HorizonWarning, stacklevel=2)
    r = float(r)
    g1 = float(gamma1)
    m_sigma, s_sigma = _log_mean_and_stderr(r * sigma1)
    m_varpi, s_varpi = _log_mean_and_stderr(g1 * varpi)
    counts = np.bincount(np.minimum(tau, tail_len), minlength=tail_len + 1)
    tail = 1.0 - np.cumsum(counts)[:tail_len] / n_paths
    return CouplingEstimates(
        m_sigma, s_sigma, m_varpi, s_varpi, tail, n_paths, seed, r, g1, n_cens, sigma1, varpi, tau
    )
