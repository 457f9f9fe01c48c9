"""Splitting construction for finite chains and exact regenerative quantities.

A :class:`SplitChain` lives on the doubled state space: state ``i`` at level
0 has index ``i`` and its level-1 copy has index ``n_states + i``.  The atom
is the set of level-1 copies of the small set C.  Every quantity here is
obtained by taboo linear algebra on explicit matrices, so the module doubles
as an oracle for the certificate pipeline.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from ergocert.errors import (
    ErgocertError,
    InfeasibleMinorizationError,
    MassDeficitWarning,
    ReducibleChainError,
)
from ergocert.renewal import Pmf

ROW_TOL = 1e-12
DENSE_LIMIT = 2000
MASS_TOL = 1e-10


def _as_matrix(transition) -> np.ndarray:
    P = np.array(transition, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise ErgocertError("transition must be a nonempty square matrix")
    if not np.all(np.isfinite(P)) or P.min() < 0:
        raise ErgocertError("transition entries must be finite and nonnegative")
    bad = np.flatnonzero(np.abs(P.sum(axis=1) - 1.0) > ROW_TOL)
    if bad.size:
        raise ErgocertError(f"rows {bad[:10].tolist()} do not sum to 1")
    P.setflags(write=False)
    return P


@dataclass(frozen=True, eq=False)
class FiniteChain:
    """Row-stochastic transition matrix with optional state names."""

    transition: np.ndarray
    state_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "transition", _as_matrix(self.transition))
        if self.state_labels is not None:
            labels = tuple(str(s) for s in self.state_labels)
            if len(labels) != self.n_states:
                raise ErgocertError("one label per state is required")
            object.__setattr__(self, "state_labels", labels)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    def to_json(self) -> dict:
        out = {"n_states": self.n_states, "transition": self.transition.tolist()}
        if self.state_labels is not None:
            out["state_labels"] = list(self.state_labels)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> FiniteChain:
        chain = cls(np.asarray(obj["transition"], dtype=float), obj.get("state_labels"))
        if "n_states" in obj and int(obj["n_states"]) != chain.n_states:
            raise ErgocertError("n_states disagrees with the transition matrix")
        return chain


def _c_tuple(c_set: Iterable[int], n: int) -> tuple[int, ...]:
    c = tuple(sorted({int(x) for x in c_set}))
    if not c:
        raise ErgocertError("the small set C is empty")
    if c[0] < 0 or c[-1] >= n:
        raise ErgocertError(f"C must index states 0..{n - 1}")
    return c


def _c_mask(c_set: Sequence[int], n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[list(c_set)] = True
    return mask


def lift_measure(lam, delta: float, c_set: Iterable[int]) -> np.ndarray:
    """Lift a measure on the states to the doubled space.

    Level 0 receives ``(1-delta) lam`` on C and ``lam`` off C; level 1 receives
    ``delta lam`` on C.  Works row-wise on 2-d input.
    """
    if not 0 < delta < 0.5:
        raise ErgocertError("delta must lie in (0, 1/2)")
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    mask = _c_mask(_c_tuple(c_set, n), n)
    level0 = np.where(mask, (1.0 - delta) * lam, lam)
    level1 = np.where(mask, delta * lam, 0.0)
    return np.concatenate([level0, level1], axis=-1)


def lift_function(f) -> np.ndarray:
    """A function of the first component, seen on the doubled space."""
    f = np.asarray(f, dtype=float)
    return np.concatenate([f, f])


def project_measure(mu) -> np.ndarray:
    """Marginal on the base states: mu(x_0) + mu(x_1)."""
    mu = np.asarray(mu, dtype=float)
    n = mu.shape[-1] // 2
    return mu[..., :n] + mu[..., n:]


@dataclass(frozen=True, eq=False)
class SplitChain:
    base: FiniteChain
    c_set: tuple[int, ...]
    delta: float
    nu: np.ndarray
    transition: np.ndarray

    @property
    def n_states(self) -> int:
        return self.base.n_states

    @property
    def atom(self) -> np.ndarray:
        return self.n_states + np.asarray(self.c_set)

    @property
    def atom_mask(self) -> np.ndarray:
        mask = np.zeros(2 * self.n_states, dtype=bool)
        mask[self.atom] = True
        return mask

    @property
    def atom_row(self) -> np.ndarray:
        """Common transition row of every atom state (the lifted nu)."""
        return self.transition[self.atom[0]]

    def to_json(self) -> dict:
        return {
            "n_states": self.n_states,
            "transition": self.base.transition.tolist(),
            "c_set": list(self.c_set),
            "delta": self.delta,
            "nu": self.nu.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> SplitChain:
        return build_split(FiniteChain.from_json(obj), obj["c_set"], obj["delta"], obj["nu"])


def build_split(chain: FiniteChain, c_set: Iterable[int], delta: float, nu) -> SplitChain:
    """Split ``chain`` on the small set C with minorizing pair (delta, nu)."""
    if not 0 < delta < 0.5:
        raise ErgocertError("delta must lie in (0, 1/2)")
    n = chain.n_states
    c = _c_tuple(c_set, n)
    mask = _c_mask(c, n)
    nu = np.array(nu, dtype=float)
    if nu.shape != (n,) or nu.min() < 0:
        raise ErgocertError("nu must be a nonnegative vector with one entry per state")
    if np.any(nu[~mask] > 0):
        raise ErgocertError("nu must be supported inside C")
    if abs(nu.sum() - 1.0) > ROW_TOL:
        raise ErgocertError("nu must be a probability (nu(C) = 1)")
    P = chain.transition
    slack = P[mask] - 2.0 * delta * nu[None, :]
    bad = np.argwhere(slack < -ROW_TOL)
    if bad.size:
        cs = np.asarray(c)
        raise InfeasibleMinorizationError((int(cs[i]), int(j)) for i, j in bad)

    rows = P.copy()
    rows[mask] = np.clip((P[mask] - delta * nu) / (1.0 - delta), 0.0, None)
    top = lift_measure(rows, delta, c)
    bottom = np.broadcast_to(lift_measure(nu, delta, c), (n, 2 * n))
    Q = np.vstack([top, bottom])
    Q /= Q.sum(axis=1, keepdims=True)
    Q.setflags(write=False)
    nu.setflags(write=False)
    return SplitChain(chain, c, float(delta), nu, Q)


def _occupation(start: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """start @ (I - Q)^{-1}: expected visits under the sub-stochastic kernel Q."""
    m = Q.shape[0]
    if m == 0:
        return start.copy()
    if m < DENSE_LIMIT:
        try:
            return scipy.linalg.solve((np.eye(m) - Q).T, start)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise ReducibleChainError("taboo kernel is singular: a class avoids the atom") from exc
    acc = np.zeros_like(start)
    w = start.copy()
    for _ in range(10_000_000):
        acc += w
        w = w @ Q
        if w.sum() < 1e-15:
            return acc
    raise ReducibleChainError("taboo series did not converge: a class avoids the atom")


def _reaches(Q: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Boolean mask of states that reach ``targets`` with positive probability."""
    m = Q.shape[0]
    ok = np.zeros(m, dtype=bool)
    ok[targets] = True
    pred = [np.flatnonzero(Q[:, j] > 0) for j in range(m)]
    queue = deque(int(t) for t in targets)
    while queue:
        j = queue.popleft()
        for i in pred[j]:
            if not ok[i]:
                ok[i] = True
                queue.append(i)
    return ok


def atom_return_law(split: SplitChain, n_max: int) -> Pmf:
    """Exact law of the return time to the atom for k = 1..n_max."""
    Q = split.transition
    in_atom = split.atom_mask
    w = split.atom_row.copy()
    masses = np.empty(n_max)
    for k in range(n_max):
        masses[k] = w[in_atom].sum()
        w[in_atom] = 0.0
        w = w @ Q
    residual = max(0.0, 1.0 - masses.sum())
    if residual > MASS_TOL:
        warnings.warn(
            f"return law truncated at n_max={n_max}: residual mass {residual:.3e}",
            MassDeficitWarning,
            stacklevel=2,
        )
    return Pmf(1, masses, residual)


def kac_invariant(split: SplitChain) -> tuple[np.ndarray, np.ndarray]:
    """Invariant laws (split, base) from the occupation measure of one excursion."""
    Q = split.transition
    n = split.n_states
    in_atom = split.atom_mask
    level0 = np.arange(n)
    if not _reaches(Q, split.atom)[level0].all():
        raise ReducibleChainError("some base state never reaches the atom")
    other = np.flatnonzero(~in_atom)
    start = split.atom_row
    visits = _occupation(start[other], Q[np.ix_(other, other)])
    occ = np.zeros(2 * n)
    occ[other] = visits
    # position at the return time itself
    occ[in_atom] = start[in_atom] + visits @ Q[np.ix_(other, np.flatnonzero(in_atom))]
    mean_return = occ.sum()
    pi_split = occ / mean_return
    return pi_split, project_measure(pi_split)


def mean_return_time(split: SplitChain) -> float:
    """Expected return time to the atom (by Kac, 1 / pi(atom))."""
    pi_split, _ = kac_invariant(split)
    return 1.0 / pi_split[split.atom_mask].sum()


def regenerative_terms(
    split: SplitChain, f, x_start: int, n_max: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sequences (t, gamma, u) indexed 0..n_max.

    ``t(k) = E_atom f(X_k) 1{tau >= k}``, ``gamma(j) = P_x(tau = j)`` and
    ``u(l) = P_atom(X_l in atom)``, with tau the first visit to the atom at a
    time >= 1.  Then ``E_x f(X_n) 1{tau < n} = (gamma * u * t)(n)``.
    """
    Q = split.transition
    in_atom = split.atom_mask
    fl = lift_function(f)
    if fl.shape != (Q.shape[0],):
        raise ErgocertError("f needs one value per base state")

    t = np.zeros(n_max + 1)
    w = split.atom_row.copy()
    for k in range(1, n_max + 1):
        t[k] = w @ fl
        w[in_atom] = 0.0
        w = w @ Q

    gamma = np.zeros(n_max + 1)
    w = np.zeros(Q.shape[0])
    w[x_start] = 1.0
    for j in range(1, n_max + 1):
        w = w @ Q
        gamma[j] = w[in_atom].sum()
        w[in_atom] = 0.0

    u = np.zeros(n_max + 1)
    u[0] = 1.0
    w = split.atom_row.copy()
    for l in range(1, n_max + 1):
        u[l] = w[in_atom].sum()
        w = w @ Q
    return t, gamma, u


def hit_before_expectation(split: SplitChain, f, x_start: int, n_max: int) -> np.ndarray:
    """``E_x f(X_n) 1{tau < n}`` for n = 0..n_max by forward matrix products."""
    Q = split.transition
    in_atom = split.atom_mask
    fl = lift_function(f)
    out = np.zeros(n_max + 1)
    fresh = np.zeros(Q.shape[0])
    fresh[x_start] = 1.0
    hit = np.zeros(Q.shape[0])
    for n in range(1, n_max + 1):
        out[n] = (hit @ Q) @ fl
        step = fresh @ Q
        hit = hit @ Q
        hit[in_atom] += step[in_atom]
        fresh = np.where(in_atom, 0.0, step)
    return out


def taboo_probability(split: SplitChain, x_start: int, n_max: int) -> np.ndarray:
    """P_x(n-th visit to C_0 u C_1 happens before the atom is hit), n = 1..n_max.

    The first n visits must all land in C_0, so the answer is ``(H^n 1)(x)``
    with H the first-entrance kernel from any state onto C_0.
    """
    Q = split.transition
    n = split.n_states
    c = np.asarray(split.c_set)
    b_mask = np.zeros(2 * n, dtype=bool)
    b_mask[c] = True
    b_mask[n + c] = True
    outside = np.flatnonzero(~b_mask)
    # H[z, c] = P_z(first entrance into B, at time >= 1, is at c_0)
    q_oo = Q[np.ix_(outside, outside)]
    q_oc = Q[np.ix_(outside, c)]
    if outside.size:
        try:
            through = scipy.linalg.solve(np.eye(outside.size) - q_oo, q_oc)
        except scipy.linalg.LinAlgError as exc:
            raise ReducibleChainError("some states never enter C") from exc
        H = Q[:, c] + Q[:, outside] @ through
    else:
        H = Q[:, c].copy()
    probs = np.empty(n_max)
    g = np.ones(c.size)
    for k in range(n_max):
        probs[k] = H[x_start] @ g
        g = H[c] @ g
    return probs
