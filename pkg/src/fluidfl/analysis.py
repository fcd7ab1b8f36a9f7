"""Sparse-gradient keep probabilities, the slack-rate formula and the
retained-mass bound, plus a brute-force Bernoulli oracle.

The gradient vector g must be sorted by descending magnitude. The first k
entries are always kept (p = 1); the published model keeps entry i > k with
p_i = |g_i| / r, subject to |g_i| / r <= 1. The rate solving the slack
identity

    sum_{i<=k} g_i^2 + sum_{i>k} |g_i| / r = (1 + eps) * sum_i g_i^2

is r = sum_{i>k} |g_i| / ((1 + eps) * sum_i g_i^2 - sum_{i<=k} g_i^2), and the
retained probability mass is claimed to satisfy sum_i p_i <= k * (1 + eps).

An alternative draft of the same analysis uses p_i = r * |g_i| with expected
second moment sum g_i^2 / p_i; it is exposed behind the `alternative` flag
for comparison without asserting either variant as the correct one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, InfeasibleRateError, RateError, SlackError

_BOUND_TOLERANCE = 1e-12


def _as_sorted_magnitudes(g) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64).ravel()
    if g.size == 0:
        raise DataError("gradient vector is empty")
    mags = np.abs(g)
    if np.any(np.diff(mags) > 0):
        raise DataError("gradient vector must be sorted by descending magnitude")
    return mags


def _check_k(k: int, m: int) -> int:
    k = int(k)
    if not (0 <= k <= m):
        raise DataError(f"k must lie in [0, {m}], got {k}")
    return k


def keep_probabilities(g, k: int, rate: float,
                       alternative: bool = False) -> np.ndarray:
    """Keep probability per element: 1 for the top-k, |g_i|/r for the rest.

    With alternative=True the tail uses the draft form r*|g_i| instead.
    Raises InfeasibleRateError when any tail probability would exceed 1.
    """
    mags = _as_sorted_magnitudes(g)
    k = _check_k(k, mags.size)
    if rate <= 0:
        raise RateError(f"rate must be positive, got {rate}")
    p = np.ones(mags.size)
    tail = mags[k:] * rate if alternative else mags[k:] / rate
    if np.any(tail > 1.0):
        worst = float(tail.max())
        raise InfeasibleRateError(
            f"keep probability {worst:.6g} exceeds 1 at rate {rate:.6g}"
        )
    p[k:] = tail
    return p


def rate_from_slack(g, k: int, eps: float) -> float:
    """Rate implied by the slack identity; 0 when the tail has no mass."""
    mags = _as_sorted_magnitudes(g)
    k = _check_k(k, mags.size)
    if eps <= 0:
        raise SlackError(f"eps must be positive, got {eps}")
    numerator = float(mags[k:].sum())
    denominator = float((1.0 + eps) * (mags ** 2).sum() - (mags[:k] ** 2).sum())
    if denominator <= 0:
        raise SlackError(f"denominator {denominator:.6g} is not positive")
    return numerator / denominator


def slack_identity_residual(g, k: int, rate: float, eps: float) -> float:
    """Left side of the slack identity; exactly 0 at the implied rate."""
    mags = _as_sorted_magnitudes(g)
    k = _check_k(k, mags.size)
    if rate <= 0:
        raise RateError(f"rate must be positive, got {rate}")
    total_sq = float((mags ** 2).sum())
    head_sq = float((mags[:k] ** 2).sum())
    return head_sq + float(mags[k:].sum()) / rate - (1.0 + eps) * total_sq


@dataclass
class BoundCheck:
    """Result of a retained-mass bound evaluation."""

    rate: float
    sum_p: float
    bound: float
    holds: bool


def probability_mass_bound(g, k: int, eps: float,
                           alternative: bool = False) -> BoundCheck:
    """Compute sum(p) against the k*(1+eps) bound at the slack-implied rate."""
    rate = rate_from_slack(g, k, eps)
    if rate <= 0:
        raise InfeasibleRateError("slack-implied rate is degenerate (no tail mass)")
    p = keep_probabilities(g, k, rate, alternative=alternative)
    sum_p = float(p.sum())
    bound = k * (1.0 + eps)
    return BoundCheck(rate, sum_p, bound, sum_p <= bound + _BOUND_TOLERANCE)


def expected_second_moment(g, p) -> float:
    """sum g_i^2 p_i, the mean retained squared mass."""
    g = np.asarray(g, dtype=np.float64).ravel()
    p = np.asarray(p, dtype=np.float64).ravel()
    if g.shape != p.shape:
        raise DataError("g and p must have the same length")
    return float((g ** 2 * p).sum())


def alternative_second_moment(g, p) -> float:
    """sum g_i^2 / p_i, the draft (rescaled-estimator) second moment."""
    g = np.asarray(g, dtype=np.float64).ravel()
    p = np.asarray(p, dtype=np.float64).ravel()
    if g.shape != p.shape:
        raise DataError("g and p must have the same length")
    if np.any(p <= 0):
        raise DataError("all keep probabilities must be positive")
    return float((g ** 2 / p).sum())


def empirical_second_moment(g, p, trials: int, seed,
                            rescaled: bool = False) -> float:
    """Monte-Carlo second moment of the Bernoulli-sparsified vector.

    Each trial keeps element i with probability p_i and sums the squares of
    the kept values; with rescaled=True kept values are g_i / p_i, so the
    estimate converges to sum g_i^2 / p_i instead of sum g_i^2 p_i.
    """
    g = np.asarray(g, dtype=np.float64).ravel()
    p = np.asarray(p, dtype=np.float64).ravel()
    if g.shape != p.shape:
        raise DataError("g and p must have the same length")
    if trials < 1:
        raise DataError("need at least one trial")
    if rescaled and np.any(p <= 0):
        raise DataError("rescaled estimator needs positive probabilities")
    values = (g / p) ** 2 if rescaled else g ** 2
    rng = np.random.default_rng(seed)
    total = 0.0
    remaining = int(trials)
    chunk = max(1, min(remaining, 4_000_000 // max(1, g.size)))
    while remaining > 0:
        block = min(chunk, remaining)
        kept = rng.random((block, g.size)) < p
        total += float((kept * values).sum())
        remaining -= block
    return total / trials


def estimator_sigma(g, p, trials: int, rescaled: bool = False) -> float:
    """Exact standard error of the Monte-Carlo estimator above."""
    g = np.asarray(g, dtype=np.float64).ravel()
    p = np.asarray(p, dtype=np.float64).ravel()
    values = (g / p) ** 2 if rescaled else g ** 2
    var = float((values ** 2 * p * (1.0 - p)).sum())
    return float(np.sqrt(var / trials))


def sample_bounded_instance(rng: np.random.Generator, m: int | None = None,
                            k: int | None = None, eps: float | None = None,
                            max_tries: int = 100):
    """Draw a random (g, k, eps) instance from the top-heavy regime.

    The retained-mass bound is not a theorem for arbitrary vectors with
    valid probabilities; it presumes k much smaller than the length and a
    tail whose squared mass fits inside the slack budget
    eps * (k - sum_head g^2) / (1 + eps). This sampler draws head magnitudes
    below 1, gives the tail a geometric decay scaled into half that budget,
    and resamples until the slack-implied rate yields valid probabilities.
    """
    for _ in range(max_tries):
        m_i = int(m) if m is not None else int(rng.integers(20, 201))
        k_i = int(k) if k is not None else int(rng.integers(1, max(2, m_i // 10)))
        eps_i = float(eps) if eps is not None else float(rng.uniform(0.05, 1.0))
        if not (1 <= k_i < m_i):
            raise DataError(f"need 1 <= k < m, got k={k_i}, m={m_i}")
        head = np.sort(rng.uniform(0.1, 0.9, size=k_i))[::-1]
        budget = 0.5 * eps_i * (k_i - float((head ** 2).sum())) / (1.0 + eps_i)
        if budget <= 0:
            continue
        decay = rng.uniform(0.7, 0.95) ** np.arange(m_i - k_i)
        tail = decay * np.sqrt(budget) / np.linalg.norm(decay)
        if tail[0] >= head[-1]:
            tail *= 0.9 * head[-1] / tail[0]
        g = np.concatenate([head, tail])
        try:
            rate = rate_from_slack(g, k_i, eps_i)
            if rate <= 0:
                continue
            keep_probabilities(g, k_i, rate)
        except (SlackError, InfeasibleRateError):
            continue
        return g, k_i, eps_i
    raise DataError("could not sample a feasible instance")
