"""Closed-form security analysis.

The number of correct nodes is a birth-death chain on ``0..N``: a compromise
(rate ``1/tau``) hits a uniformly chosen node and a refresh (rate ``lam``)
restores one. Everything downstream, i.e. the probability that a relay is
compromised, the success probability of a path and the breach probability
of ``k`` snapshots, derives from its stationary law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb, logsumexp

TABLE1_LENGTHS = tuple(range(5, 13))
TABLE1_QS = (0.5, 0.6, 0.7, 0.8, 0.9)
# reference (L, q) cells whose values break the monotonicity of the closed form
SUSPECT_CELLS = frozenset({(11, 0.7)})


@dataclass(frozen=True)
class MarkovModel:
    N: int
    lam: float
    tau: float
    efficiency: float = 1.0   # discount on the refresh rate, e.g. for unsealed refreshes

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not (self.lam > 0 and self.tau > 0):
            raise ValueError("lam and tau must be > 0")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")

    @property
    def effective_lam(self) -> float:
        return self.lam * self.efficiency

    @property
    def total_rate(self) -> float:
        return self.effective_lam + 1.0 / self.tau


def transition_row(model: MarkovModel, i: int):
    """``(mu_i, s_i, nu_i)``: probabilities of stepping to i-1, staying, stepping to i+1."""
    N = model.N
    if not 0 <= i <= N:
        raise IndexError(f"state {i} outside 0..{N}")
    rate = model.total_rate
    mu = i / (N * model.tau * rate)
    nu = (N - i) * model.effective_lam / (N * rate)
    s = (N - i) / (N * model.tau * rate) + i * model.effective_lam / (N * rate)
    return mu, s, nu


def transition_matrix(model: MarkovModel) -> np.ndarray:
    N = model.N
    P = np.zeros((N + 1, N + 1))
    for i in range(N + 1):
        mu, s, nu = transition_row(model, i)
        P[i, i] = s
        if i > 0:
            P[i, i - 1] = mu
        if i < N:
            P[i, i + 1] = nu
    return P


def _rows(model: MarkovModel):
    i = np.arange(model.N + 1)
    rate = model.total_rate
    mu = i / (model.N * model.tau * rate)
    nu = (model.N - i) * model.effective_lam / (model.N * rate)
    return mu, 1.0 - mu - nu, nu


def stationary(model: MarkovModel) -> np.ndarray:
    """Stationary law from the birth-death product formula, in log space."""
    mu, _, nu = _rows(model)
    log_ratio = np.log(nu[:-1]) - np.log(mu[1:])
    log_w = np.concatenate([[0.0], np.cumsum(log_ratio)])
    return np.exp(log_w - logsumexp(log_w))


def stationary_power(model: MarkovModel, tol: float = 1e-15, max_iter: int = 1_000_000) -> np.ndarray:
    """Fixed point of ``pi = pi P`` by power iteration on the tridiagonal chain.

    Independent of the product formula; used as its cross-check.
    """
    mu, s, nu = _rows(model)
    pi = np.full(model.N + 1, 1.0 / (model.N + 1))
    for _ in range(max_iter):
        nxt = pi * s
        nxt[1:] += pi[:-1] * nu[:-1]
        nxt[:-1] += pi[1:] * mu[1:]
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) < tol:
            return nxt
        pi = nxt
    raise RuntimeError("power iteration did not converge")


def balance_residual(model: MarkovModel, pi) -> float:
    """max |pi P - pi|, computed from the tridiagonal entries."""
    mu, s, nu = _rows(model)
    pi = np.asarray(pi, dtype=float)
    out = pi * s
    out[1:] += pi[:-1] * nu[:-1]
    out[:-1] += pi[1:] * mu[1:]
    return float(np.max(np.abs(out - pi)))


def mean_correct(model: MarkovModel) -> float:
    pi = stationary(model)
    return float(np.dot(np.arange(model.N + 1), pi))


def prob_relay_compromised(model: MarkovModel) -> float:
    """P0: chance that a uniformly chosen node is compromised, (N - E[X]) / N."""
    return (model.N - mean_correct(model)) / model.N


def success_from_p0(p0: float, L: int, q: float, exclude_m0: bool = False) -> float:
    """P{Y > 0} for a path of ``L`` relays, given per-relay compromise chance ``p0``.

    The number of re-encrypting relays is Binomial(L, q), so
    ``P{Y = 0} = ((1 - q) + q * p0) ** L``. With ``exclude_m0`` the m = 0 term
    (nobody re-encrypts) is dropped from that sum.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    p_zero = ((1.0 - q) + q * p0) ** L
    if exclude_m0:
        p_zero -= (1.0 - q) ** L
    return 1.0 - p_zero


def success_probability(model: MarkovModel, L: int, q: float, exclude_m0: bool = False) -> float:
    return success_from_p0(prob_relay_compromised(model), L, q, exclude_m0)


def success_enumerated(p0: float, L: int, q: float) -> float:
    """Same quantity as an explicit sum over the number of re-encryptions."""
    m = np.arange(L + 1)
    weights = comb(L, m) * q**m * (1 - q) ** (L - m)
    return float(1.0 - np.sum(weights * p0**m))


def breach_probability(f1: float, k: int) -> float:
    """Chance of breaching all of ``k`` independent snapshots."""
    if not 0 <= f1 <= 1:
        raise ValueError("f1 must be a probability")
    if k < 0:
        raise ValueError("k must be >= 0")
    return f1**k


def single_breach(model: MarkovModel, q: float, length_dist: dict, exclude_m0: bool = False) -> float:
    """E_L[1 - P{Y > 0}] over a path-length distribution ``{L: P(L)}``."""
    total = sum(length_dist.values())
    if not math.isclose(total, 1.0, abs_tol=1e-9):
        raise ValueError(f"path-length distribution sums to {total}")
    p0 = prob_relay_compromised(model)
    return float(sum(w * (1.0 - success_from_p0(p0, L, q, exclude_m0)) for L, w in length_dist.items()))


def table1(model: MarkovModel, lengths=TABLE1_LENGTHS, qs=TABLE1_QS, exclude_m0: bool = False) -> np.ndarray:
    p0 = prob_relay_compromised(model)
    return np.array([[success_from_p0(p0, L, q, exclude_m0) for q in qs] for L in lengths])
