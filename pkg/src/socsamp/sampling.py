"""Message generation: estimate-to-distribution maps and one-hot draws.

Randomness is consumed through named substreams so that the message of agent
``i`` at step ``k`` of trial ``t`` is a pure function of
``(trial seed, agent, step)``: each agent has its own counter-seeded stream
and step ``k`` uses exactly the k-th uniform of that stream.  Identical
arguments replay identically across runs and worker schedules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .state import as_opinion_vector

_MASK64 = (1 << 64) - 1

# substream domain tags; fixed forever so derived draws stay reproducible
AGENT_DOMAIN = 1
WEIGHT_DOMAIN = 2
INIT_DOMAIN = 3


def substream(seed, *path):
    """Independent generator addressed by (seed, path)."""
    ss = np.random.SeedSequence(
        entropy=int(seed) & _MASK64, spawn_key=tuple(int(p) for p in path)
    )
    return np.random.Generator(np.random.PCG64(ss))


def message_uniform_panel(seed, n_agents, horizon):
    """Uniform variate for every (agent, step): row i is agent i's stream."""
    panel = np.empty((n_agents, horizon))
    for i in range(n_agents):
        panel[i] = substream(seed, AGENT_DOMAIN, i).random(horizon)
    return panel


def weight_stream(seed):
    return substream(seed, WEIGHT_DOMAIN)


def init_stream(seed):
    return substream(seed, INIT_DOMAIN)


@dataclass(frozen=True)
class SamplingPolicy:
    """Map from an internal estimate to the message distribution.

    ``direct`` transmits the estimate as-is.  ``censored`` zeroes components
    below the step-dependent floor ``c * delta_k**exponent`` (negative
    components always fall below it) and then either renormalizes the
    survivors (default) or leaves the vector sub-stochastic, in which case
    the residual mass becomes a silent zero message.

    With ``exponent = 1`` the censoring distortion is proportional to the
    step size, which keeps the consensus limit finite; ``exponent >= 2``
    makes it vanish relative to the step size, the regime the asymptotic
    normality result needs.
    """

    kind: str = "direct"
    censor_floor_scale: float = 0.0
    censor_exponent: float = 2.0
    renormalize: bool = True

    def __post_init__(self):
        if self.kind not in ("direct", "censored"):
            raise ValueError(f"unknown sampling policy kind {self.kind!r}")
        if self.censor_floor_scale < 0:
            raise ValueError("censor floor scale must be nonnegative")
        if self.censor_exponent < 1:
            raise ValueError("censor exponent must be >= 1")


def censor_threshold(policy, delta_k):
    return policy.censor_floor_scale * delta_k ** policy.censor_exponent


def sampling_distribution(policy, q, delta_k):
    """Distribution the message is drawn from, given estimate ``q``.

    Direct policy returns ``q`` unchanged (same array).  Censored policy
    zeroes components below the floor and renormalizes survivors; if nothing
    survives it falls back to the positive part of ``q`` (the whole of ``q``
    whenever ``q`` is a proper distribution), and to the uniform vector only
    if ``q`` has no positive mass at all.  Without renormalization an
    all-censored vector stays zero, i.e. the agent is silent.
    """
    if delta_k <= 0:
        raise ValueError("step size must be positive")
    q = np.asarray(q, dtype=float)
    if policy.kind == "direct":
        return q
    alpha = censor_threshold(policy, delta_k)
    kept = np.where(q >= alpha, q, 0.0)
    total = float(kept.sum())
    if total > 0.0:
        if policy.renormalize or total > 1.0:
            return kept / total
        return kept
    if not policy.renormalize:
        return kept  # everything censored: the agent stays silent
    pos = np.clip(q, 0.0, None)
    ptot = float(pos.sum())
    if ptot > 0.0:
        return pos / ptot
    return np.full(q.size, 1.0 / q.size)


def policy_matrix(policy, q, delta_k):
    """Per-agent sampling distributions for a whole state matrix.

    Returns ``(p, uniform_fallbacks, clamped_agents)`` where the counters
    record agents that degenerated to the uniform fallback and agents whose
    negative in-flight components were treated as zero mass.
    """
    q = np.asarray(q, dtype=float)
    neg_rows = (q < 0.0).any(axis=1)
    clamped = int(neg_rows.sum())
    if policy.kind == "direct":
        if not clamped:
            return q, 0, 0
        p = q.copy()
        fallbacks = 0
        for i in np.flatnonzero(neg_rows):
            pos = np.clip(q[i], 0.0, None)
            ptot = pos.sum()
            if ptot > 0.0:
                p[i] = pos / ptot if ptot > 1.0 else pos
            else:
                p[i] = 1.0 / q.shape[1]
                fallbacks += 1
        return p, fallbacks, clamped

    alpha = censor_threshold(policy, delta_k)
    kept = np.where(q >= alpha, q, 0.0)
    totals = kept.sum(axis=1)
    p = kept.copy()
    fallbacks = 0
    live = totals > 0.0
    if policy.renormalize:
        p[live] = kept[live] / totals[live, None]
    else:
        over = live & (totals > 1.0)
        p[over] = kept[over] / totals[over, None]
    for i in np.flatnonzero(~live):
        p[i] = sampling_distribution(policy, q[i], delta_k)
        if not policy.renormalize:
            continue
        if np.clip(q[i], 0.0, None).sum() <= 0.0:
            fallbacks += 1
    return p, fallbacks, clamped


def draw_messages(p, uniforms):
    """Inverse-CDF one-hot draws, one uniform per row.

    Rows must be nonnegative with sums at most 1 (tiny tolerance); residual
    mass of a sub-stochastic row yields the zero (silent) message.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if (p < 0.0).any():
        raise ValueError("negative component in sampling distribution")
    cdf = np.cumsum(p, axis=1)
    if (cdf[:, -1] > 1.0 + 1e-12).any():
        raise ValueError("sampling distribution components sum to more than 1")
    u = np.asarray(uniforms, dtype=float).reshape(-1)
    if u.shape[0] != p.shape[0]:
        raise ValueError("need exactly one uniform per distribution row")
    idx = (u[:, None] < cdf).argmax(axis=1)
    active = u < cdf[:, -1]
    y = np.zeros_like(p)
    rows = np.flatnonzero(active)
    y[rows, idx[rows]] = 1.0
    return y


def draw_message(p, rng):
    """Single one-hot (or silent) draw using one uniform variate from ``rng``."""
    return draw_messages(p, np.array([rng.random()]))[0]


def message_covariance_limit(q_star, n_agents):
    """Per-component message variances at the consensus limit, block diagonal.

    Each agent contributes the diagonal block ``diag(q*(1 - q*))``; the
    cross-component terms of the one-hot draw are dropped.  Use
    :func:`categorical_covariance` for the full covariance matrix.
    """
    q = as_opinion_vector(q_star)
    block = np.diag(q * (1.0 - q))
    return np.kron(np.eye(n_agents), block)


def categorical_covariance(q_star, n_agents):
    """Exact covariance of a one-hot draw at the consensus limit.

    Each agent contributes the block ``diag(q*) - q* q*^T``, which is what a
    categorical sample actually realizes; its rows sum to zero, matching the
    sum-preserving message deviations.
    """
    q = as_opinion_vector(q_star)
    block = np.diag(q) - np.outer(q, q)
    return np.kron(np.eye(n_agents), block)
