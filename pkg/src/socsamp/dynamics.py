"""Protocol state machine: step schedules, the per-step update, and trials.

One step is a synchronous round: every agent draws a one-hot message from its
sampling distribution, transmits, and moves its estimate by

    Q_i <- (1 - d*a_ii) Q_i - d*b_ii Y_i + d * sum_j w_ij Y_j

with step size ``d``, self-weight included in the neighbor sum.  The noise
split used throughout the analysis writes the realized increment as
``d * (drift + censor_noise + martingale_noise)`` where the drift uses the
mean weight matrix; :func:`decompose_step` reproduces that split exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import FIXED, IID, SWITCHING, mean_matrix, sample_weight_matrix
from .sampling import (
    SamplingPolicy,
    message_uniform_panel,
    policy_matrix,
    weight_stream,
)
from .state import StackedState, consensus_error, initial_state

A4_TOL = 1e-12


@dataclass(frozen=True)
class StepSchedule:
    """Decreasing step sizes ``a / (k + k0)**gamma`` for steps ``k >= 1``.

    The exponent must lie in (1/2, 1] so the steps are square-summable but
    not summable.  ``limit_constant`` is the limit of
    ``1/d_{k+1} - 1/d_k``: ``1/a`` when gamma is exactly 1, else 0.
    """

    amplitude: float = 1.0
    exponent: float = 0.75
    offset: int = 0

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ValueError("A1 violated: amplitude a must be positive")
        if not 0.5 < self.exponent <= 1.0:
            raise ValueError(
                f"A1 violated: exponent gamma must be in (1/2, 1], got {self.exponent}"
            )
        if self.offset < 0:
            raise ValueError("A1 violated: offset k0 must be nonnegative")

    @property
    def limit_constant(self):
        return 1.0 / self.amplitude if self.exponent == 1.0 else 0.0

    def step_size(self, k):
        if k < 1:
            raise ValueError(f"step index starts at 1, got {k}")
        return self.amplitude / (k + self.offset) ** self.exponent


def step_size(schedule, k):
    return schedule.step_size(k)


@dataclass(frozen=True)
class MixingMatrices:
    """Diagonal retention/transmission coefficients with a_ii + b_ii = 1."""

    a_diag: np.ndarray
    b_diag: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_diag, dtype=float)
        b = np.asarray(self.b_diag, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("mixing diagonals must be equal-length vectors")
        if (a < 0).any() or (b < 0).any():
            i = int(np.argmin(np.minimum(a, b)))
            raise ValueError(
                f"A4 violated: coefficients must be nonnegative at i={i + 1}"
            )
        gap = np.abs(a + b - 1.0)
        if gap.max() > A4_TOL:
            i = int(gap.argmax())
            raise ValueError(
                f"A4 violated: a_ii+b_ii = {a[i] + b[i]!r} at i={i + 1}"
            )
        for name, arr in (("a_diag", a), ("b_diag", b)):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_b(cls, b, n_agents):
        b = np.asarray(b, dtype=float)
        if b.ndim == 0:
            b = np.full(n_agents, float(b))
        return cls(1.0 - b, b)

    @property
    def n_agents(self):
        return self.b_diag.shape[0]


@dataclass(frozen=True)
class StepDecomposition:
    """Split of one realized increment into drift and the two noise parts.

    ``delta_k * (drift + censor_noise + martingale_noise)`` equals the
    realized increment exactly.
    """

    drift: np.ndarray
    censor_noise: np.ndarray
    martingale_noise: np.ndarray


@dataclass
class TrialDiagnostics:
    """Counters and maxima accumulated while a trial runs."""

    simplex_violation_agent_steps: int = 0
    max_negative_component: float = 0.0
    silent_messages: int = 0
    uniform_fallbacks: int = 0
    clamped_agents: int = 0
    max_sum_drift: float = 0.0
    max_noise_norm: float = 0.0
    max_martingale_norm: float = 0.0
    noise_norm_bound: float = math.nan

    def as_dict(self):
        return {
            "simplex_violation_agent_steps": self.simplex_violation_agent_steps,
            "max_negative_component": self.max_negative_component,
            "silent_messages": self.silent_messages,
            "uniform_fallbacks": self.uniform_fallbacks,
            "clamped_agents": self.clamped_agents,
            "max_sum_drift": self.max_sum_drift,
            "max_noise_norm": self.max_noise_norm,
            "max_martingale_norm": self.max_martingale_norm,
            "noise_norm_bound": self.noise_norm_bound,
        }


@dataclass(frozen=True)
class TrialConfig:
    n_agents: int
    n_opinions: int
    initial_samples: tuple
    weight_model: object
    mixing: MixingMatrices
    policy: SamplingPolicy
    schedule: StepSchedule
    horizon: int
    seed: int
    checkpoints: object = "log"
    trial_index: int = 0
    record_noise: bool = True
    record_mean_increments: bool = True

    def __post_init__(self):
        if self.n_agents < 1 or self.n_opinions < 1:
            raise ValueError("need at least one agent and one opinion state")
        if len(self.initial_samples) != self.n_agents:
            raise ValueError(
                f"got {len(self.initial_samples)} initial samples for "
                f"{self.n_agents} agents"
            )
        if self.weight_model.n != self.n_agents:
            raise ValueError("weight model size does not match agent count")
        if self.mixing.n_agents != self.n_agents:
            raise ValueError("mixing diagonal length does not match agent count")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")


@dataclass
class TrialTrace:
    trial_index: int
    seed: int
    checkpoints: list
    snapshots: list
    consensus_errors: list
    disagreements: list
    final_state: StackedState
    final_step_size: float
    diagnostics: TrialDiagnostics
    mean_increments: np.ndarray | None = None
    initial_average: np.ndarray | None = None


class TrialAborted(RuntimeError):
    def __init__(self, step_index, diagnostics):
        super().__init__(
            f"non-finite value encountered at step {step_index}; "
            f"diagnostics: {diagnostics.as_dict()}"
        )
        self.step_index = step_index
        self.diagnostics = diagnostics


def default_checkpoints(horizon):
    """Logarithmic checkpoints 1, 2, 5, 10, ... plus 0 and the horizon."""
    ks = {0, horizon}
    scale = 1
    while scale <= horizon:
        for c in (1, 2, 5):
            if c * scale <= horizon:
                ks.add(c * scale)
        scale *= 10
    return tuple(sorted(ks))


def resolve_checkpoints(spec, horizon):
    if spec == "log" or spec is None:
        return default_checkpoints(horizon)
    if spec == "all":
        return tuple(range(horizon + 1))
    ks = sorted({int(k) for k in spec})
    if any(k < 0 or k > horizon for k in ks):
        raise ValueError("checkpoints must lie in 0..horizon")
    if horizon not in ks:
        ks.append(horizon)
    return tuple(ks)


def _check_update_args(state, w, mix, messages):
    n, m = state.n_agents, state.n_opinions
    w = np.asarray(w, dtype=float)
    y = np.asarray(messages, dtype=float)
    if w.shape != (n, n):
        raise ValueError(f"weight matrix shape {w.shape} does not match {n} agents")
    if y.shape != (n, m):
        raise ValueError(f"messages shape {y.shape} does not match state ({n}, {m})")
    if mix.n_agents != n:
        raise ValueError("mixing diagonal length does not match agent count")
    return w, y


def update_step(state, w, mix, messages, delta_k):
    """One synchronous protocol round; preserves each agent's component sum."""
    w, y = _check_update_args(state, w, mix, messages)
    a, b = mix.a_diag, mix.b_diag
    q = state.q
    increment = w @ y - (a + b)[:, None] * q - b[:, None] * (y - q)
    return StackedState(q + delta_k * increment, state.step_index + 1)


def decompose_step(state, w, wbar, mix, p, messages, delta_k):
    """Drift / censoring-noise / martingale-noise split of one step.

    ``wbar`` must be the mean of the weight-matrix model in force; ``p`` is
    the matrix of per-agent sampling distributions the messages were drawn
    from.
    """
    w, y = _check_update_args(state, w, mix, messages)
    wbar = np.asarray(wbar, dtype=float)
    p = np.asarray(p, dtype=float)
    q = state.q
    b = mix.b_diag[:, None]
    drift = wbar @ q - q
    censor = wbar @ (p - q) - b * (p - q)
    mart = (w @ (y - p) - b * (y - p)) + (w - wbar) @ p
    return StepDecomposition(drift, censor, mart)


def noise_norm_bound(n_agents, n_opinions, scale=1.0):
    """Static bound on the projected martingale-noise norm per step."""
    return scale * n_agents**2 * n_opinions**2


def run_trial(config):
    """Execute one trial and capture checkpoint snapshots and diagnostics.

    Step ``k`` (1-based) samples the weight matrix, forms the sampling
    distributions from the current state, draws the messages using the
    pre-assigned uniform of each (agent, step), and applies the update with
    step size ``schedule.step_size(k)``.  Deterministic given
    ``config.seed``.
    """
    n, m = config.n_agents, config.n_opinions
    model = config.weight_model
    mix = config.mixing
    schedule = config.schedule
    horizon = config.horizon
    checkpoints = resolve_checkpoints(config.checkpoints, horizon)
    checkpoint_set = set(checkpoints)

    state0 = initial_state(config.initial_samples, m)
    q = state0.q.copy()
    initial_avg = q.mean(axis=0)

    a, b = mix.a_diag, mix.b_diag
    ab = a + b
    b_col = b[:, None]

    uniforms = message_uniform_panel(config.seed, n, horizon)
    wrng = weight_stream(config.seed)
    support_idx = None
    if model.kind == IID:
        support_idx = wrng.choice(
            len(model.support), size=horizon, p=np.asarray(model.probabilities)
        )
    wbar_static = None if model.kind == SWITCHING else mean_matrix(model)

    diag = TrialDiagnostics()
    diag.noise_norm_bound = noise_norm_bound(n, m)
    record_noise = config.record_noise and n >= 2
    mean_increments = (
        np.zeros((horizon, m)) if config.record_mean_increments else None
    )

    # loop constants hoisted: the per-step work is small-array numpy, so
    # call count dominates the runtime
    policy = config.policy
    direct = policy.kind == "direct"
    fixed_w = model.kind == FIXED
    w_static = model.support[0] if fixed_w else None
    col_sums_static = w_static.sum(axis=0) if fixed_w else None
    conserving = bool(np.all(b == 1.0))
    ab_col = ab[:, None]
    all_rows = np.arange(n)

    snapshots, errs, spreads, kept = [], [], [], []

    def snapshot(k):
        kept.append(k)
        snapshots.append(q.copy())
        errs.append(consensus_error(q, initial_avg))
        spreads.append(consensus_error(q, q.mean(axis=0)))

    if 0 in checkpoint_set:
        snapshot(0)

    delta = math.nan
    qmin = float(q.min())
    for k in range(1, horizon + 1):
        delta = schedule.step_size(k)
        if fixed_w:
            w = w_static
            wbar = w
        elif model.kind == SWITCHING:
            w = model.support[k % len(model.support)]
            wbar = w
        elif model.kind == IID:
            w = model.support[support_idx[k - 1]]
            wbar = wbar_static
        else:
            w = sample_weight_matrix(model, k, wrng)
            wbar = wbar_static

        if direct and qmin >= 0.0:
            p = q
        else:
            p, fallbacks, clamped = policy_matrix(policy, q, delta)
            diag.uniform_fallbacks += fallbacks
            diag.clamped_agents += clamped

        # inverse-CDF draws, one pre-assigned uniform per agent
        cdf = np.cumsum(p, axis=1)
        u = uniforms[:, k - 1]
        idx = (u[:, None] < cdf).argmax(axis=1)
        active = u < cdf[:, -1]
        y = np.zeros((n, m))
        if active.all():
            y[all_rows, idx] = 1.0
        else:
            rows = np.flatnonzero(active)
            y[rows, idx[rows]] = 1.0
            diag.silent_messages += n - rows.size

        ym_q = y - q
        ym_p = ym_q if p is q else y - p

        if record_noise:
            mart = w @ ym_p - b_col * ym_p
            if wbar is not w:
                mart += (w - wbar) @ p
            sq = float((mart * mart).sum())
            diag.max_martingale_norm = max(diag.max_martingale_norm, math.sqrt(sq))
            col_mean = mart.mean(axis=0)
            proj = math.sqrt(max(sq - n * float(col_mean @ col_mean), 0.0))
            diag.max_noise_norm = max(diag.max_noise_norm, proj)

        if mean_increments is not None:
            col_sums = col_sums_static if fixed_w else w.sum(axis=0)
            mean_increments[k - 1] = (delta / n) * ((col_sums - b) @ ym_q)

        if conserving:
            q = q + delta * (w @ y - y)
        else:
            q = q + delta * (w @ y - ab_col * q - b_col * ym_q)

        qmin = float(q.min())
        if qmin < 0.0:
            diag.simplex_violation_agent_steps += int((q < 0.0).any(axis=1).sum())
            diag.max_negative_component = max(diag.max_negative_component, -qmin)
        drift = float(np.abs(q.sum(axis=1) - 1.0).max())
        if not drift < math.inf:
            raise TrialAborted(k, diag)
        if drift > diag.max_sum_drift:
            diag.max_sum_drift = drift

        if k in checkpoint_set:
            snapshot(k)

    return TrialTrace(
        trial_index=config.trial_index,
        seed=config.seed,
        checkpoints=kept,
        snapshots=snapshots,
        consensus_errors=errs,
        disagreements=spreads,
        final_state=StackedState(q, step_index=horizon),
        final_step_size=delta,
        diagnostics=diag,
        mean_increments=mean_increments,
        initial_average=initial_avg,
    )
