"""Theoretical predictions and statistical verification.

The state space splits orthogonally into the consensus line (multiples of the
all-ones vector per component) and the disagreement subspace picked out by the
rows of ``T1``.  Consensus means the reduced coordinate
``xi = (T1 kron I_M) Q`` vanishes; scaled by the square root of the step size
it converges in distribution to a zero-mean normal whose covariance ``S``
solves a continuous Lyapunov equation driven by the network and message
noise.  This module builds those objects and compares them against Monte
Carlo trials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.stats

from .network import WeightMatrixModel, mean_matrix, spectral_gap
from .sampling import categorical_covariance
from .state import StackedState, network_average

DEGENERATE_VARIANCE = 1e-12


class StabilityError(ValueError):
    """Raised when the mean network does not mix fast enough for the
    asymptotic-normality covariance to exist."""

    def __init__(self, lambda2, delta):
        super().__init__(
            "asymptotic-normality stability condition failed: "
            f"lambda2 = {lambda2:.12g} is not below 1 - delta/2 = {1 - delta / 2:.12g}"
        )
        self.lambda2 = lambda2
        self.delta = delta


@dataclass(frozen=True)
class ProjectionBasis:
    """Orthogonal split of agent space into disagreement rows and the mean.

    ``t`` is an orthogonal n-by-n matrix whose last row is ``1/sqrt(n)`` in
    every entry; ``t1`` holds the first n-1 rows, so ``t1 @ ones == 0`` and
    ``t1 @ t1.T == I``.  Built from a fixed Householder reflection, hence
    identical across runs and platforms.
    """

    t1: np.ndarray
    t: np.ndarray

    @property
    def n_agents(self):
        return self.t.shape[0]


def build_projection(n):
    if n < 2:
        raise ValueError("need at least two agents for a disagreement basis")
    # Householder reflection carrying e_n to the normalized all-ones vector
    v = np.full(n, -1.0 / math.sqrt(n))
    v[n - 1] += 1.0
    t = np.eye(n) - np.outer(v, v) * (2.0 / (v @ v))
    t1 = np.ascontiguousarray(t[:-1])
    t = np.ascontiguousarray(t)
    t1.setflags(write=False)
    t.setflags(write=False)
    return ProjectionBasis(t1=t1, t=t)


def reduce_state(state, basis):
    """Disagreement coordinate ``xi``: the state projected off the consensus line."""
    q = state.q if isinstance(state, StackedState) else np.asarray(state, dtype=float)
    return (basis.t1 @ q).reshape(-1)


def reconstruct_state(xi, average, basis):
    """Inverse of :func:`reduce_state` given the network average."""
    n = basis.n_agents
    average = np.asarray(average, dtype=float)
    xi_mat = np.asarray(xi, dtype=float).reshape(n - 1, average.size)
    return basis.t1.T @ xi_mat + np.ones((n, 1)) * average[None, :]


def q_star_prediction(state0):
    """Consensus limit in the conserving regime (b_ii = 1): the initial average."""
    return network_average(state0)


def q_star_running(mean_increments, state0):
    """Consensus-limit estimate accumulated along a realized trajectory.

    ``mean_increments`` is the per-step series of network-average shifts
    recorded by a trial; its partial sums telescope to the current network
    average, so the returned value matches ``network_average`` of the final
    state up to roundoff.  With b_ii = 1 every term is zero.
    """
    out = np.array(network_average(state0), dtype=float)
    if mean_increments is not None and len(mean_increments):
        out = out + np.asarray(mean_increments, dtype=float).sum(axis=0)
    return out


@dataclass(frozen=True)
class ReducedDrift:
    """Mean drift restricted to the disagreement subspace, plus its shift.

    ``fbar + fbar.T`` is negative semidefinite for any doubly stochastic
    mean; the shifted matrix must be strictly stable for the asymptotic
    covariance to exist.
    """

    fbar: np.ndarray
    shifted: np.ndarray
    lambda2: float
    delta: float


def reduced_drift(wbar, basis, n_opinions, delta):
    """Build the reduced drift and verify the stability condition.

    Raises :class:`StabilityError` when ``lambda2 >= 1 - delta/2``.
    """
    wbar = np.asarray(wbar, dtype=float)
    lam2 = 1.0 - spectral_gap(wbar)
    if not lam2 < 1.0 - delta / 2.0:
        raise StabilityError(lam2, delta)
    core = basis.t1 @ (wbar - np.eye(basis.n_agents)) @ basis.t1.T
    fbar = np.kron(core, np.eye(n_opinions))
    shifted = fbar + (delta / 2.0) * np.eye(fbar.shape[0])
    return ReducedDrift(fbar=fbar, shifted=shifted, lambda2=lam2, delta=delta)


def s0_matrix(model, basis, sigma, n_opinions):
    """Driving noise covariance of the reduced iteration.

    ``model`` may be a weight model or an explicit mean matrix; ``sigma`` is
    the limit message covariance in agent-major layout.
    """
    if isinstance(model, WeightMatrixModel):
        wbar = mean_matrix(model)
    else:
        wbar = np.asarray(model, dtype=float)
    left = np.kron(
        basis.t1 @ (wbar - np.eye(basis.n_agents)), np.eye(n_opinions)
    )
    s0 = left @ np.asarray(sigma, dtype=float) @ left.T
    return (s0 + s0.T) / 2.0


def lyapunov_solve(a, s0, residual_tol=1e-10):
    """Solve ``a s + s a.T = -s0`` for the stationary covariance ``s``.

    Equals the integral of ``expm(a t) s0 expm(a.T t)`` over t >= 0, which
    exists because all eigenvalues of ``a`` must have negative real part.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    s0 = np.atleast_2d(np.asarray(s0, dtype=float))
    eigs = np.linalg.eigvals(a)
    worst = eigs[np.argmax(eigs.real)]
    if worst.real >= 0:
        raise ValueError(
            f"matrix is not stable: eigenvalue {worst:.12g} has nonnegative real part"
        )
    s = scipy.linalg.solve_continuous_lyapunov(a, -s0)
    s = (s + s.T) / 2.0
    scale = max(1.0, float(np.linalg.norm(s0)))
    for _ in range(3):
        residual = a @ s + s @ a.T + s0
        if np.linalg.norm(residual) <= residual_tol * scale:
            break
        correction = scipy.linalg.solve_continuous_lyapunov(a, -residual)
        s = s + (correction + correction.T) / 2.0
    return s


def lyapunov_residual(a, s, s0):
    """Frobenius norm of ``a s + s a.T + s0`` relative to ``max(1, |s0|)``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    s = np.atleast_2d(np.asarray(s, dtype=float))
    s0 = np.atleast_2d(np.asarray(s0, dtype=float))
    residual = np.linalg.norm(a @ s + s @ a.T + s0)
    return float(residual / max(1.0, np.linalg.norm(s0)))


def s_tilde(s, basis, n_opinions):
    """Embed the reduced covariance into the full agent-major state space.

    The embedding has no variance along the consensus direction: the
    quadratic form against ``ones kron v`` vanishes for every v.
    """
    e = np.kron(basis.t1, np.eye(n_opinions))
    out = e.T @ np.atleast_2d(np.asarray(s, dtype=float)) @ e
    return (out + out.T) / 2.0


def empirical_scaled_covariance(final_states, q_ref, basis, delta_k):
    """Sample covariance of the scaled disagreement coordinate across trials.

    Each trial contributes ``xi / sqrt(delta_k)`` computed from its final
    state; returns ``(covariance, samples)`` with one sample row per trial.
    """
    if len(final_states) < 2:
        raise ValueError("need at least two trials for a sample covariance")
    q_ref = np.asarray(q_ref, dtype=float)
    rows = []
    for st in final_states:
        q = st.q if isinstance(st, StackedState) else np.asarray(st, dtype=float)
        rows.append((basis.t1 @ (q - q_ref[None, :])).reshape(-1))
    samples = np.asarray(rows) / math.sqrt(delta_k)
    cov = np.atleast_2d(np.cov(samples, rowvar=False, ddof=1))
    return cov, samples


@dataclass
class NormalityResult:
    p_values: np.ndarray
    pass_fraction: float
    tested: list
    degenerate: list
    anomalies: list
    significance: float


def normality_test(samples, predicted_variances, significance=0.01):
    """Per-component Kolmogorov-Smirnov tests against the standard normal.

    Components are standardized by their predicted standard deviation.
    Components whose predicted variance is below ``DEGENERATE_VARIANCE`` are
    excluded as degenerate when the samples agree they are constant;
    otherwise they are flagged as anomalies and counted as failures.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    predicted = np.asarray(predicted_variances, dtype=float).reshape(-1)
    if samples.shape[1] != predicted.size:
        raise ValueError("one predicted variance per component is required")
    p_values = np.full(predicted.size, np.nan)
    tested, degenerate, anomalies = [], [], []
    passes = 0
    for j in range(predicted.size):
        if predicted[j] < DEGENERATE_VARIANCE:
            if float(np.var(samples[:, j])) >= DEGENERATE_VARIANCE:
                anomalies.append(j)
            else:
                degenerate.append(j)
            continue
        z = samples[:, j] / math.sqrt(predicted[j])
        p = float(scipy.stats.kstest(z, "norm").pvalue)
        p_values[j] = p
        tested.append(j)
        if p >= significance:
            passes += 1
    denom = len(tested) + len(anomalies)
    fraction = passes / denom if denom else math.nan
    return NormalityResult(
        p_values=p_values,
        pass_fraction=fraction,
        tested=tested,
        degenerate=degenerate,
        anomalies=anomalies,
        significance=significance,
    )


def joint_stability_margin(model, basis):
    """Smallest eigenvalue of the summed negated symmetric reduced drift.

    Positive iff the mean graphs mix jointly over one period; a diagnostic
    for the existence of the contraction constant used by the convergence
    argument.
    """
    if model.kind == "switching-periodic":
        mats = list(model.support)
    else:
        mats = [mean_matrix(model)]
    n = basis.n_agents
    acc = np.zeros((n - 1, n - 1))
    for w in mats:
        f = basis.t1 @ (np.asarray(w, dtype=float) - np.eye(n)) @ basis.t1.T
        acc += f + f.T
    return float(np.linalg.eigvalsh(-acc)[0])


@dataclass
class AsymptoticReport:
    """Theory-side objects plus optional Monte Carlo comparisons."""

    q_star: np.ndarray
    lambda2: float
    delta: float
    stability_margin: float
    sigma: np.ndarray
    s0: np.ndarray
    s: np.ndarray
    s_tilde: np.ndarray
    lyapunov_residual: float
    empirical_cov: np.ndarray | None = None
    cov_rel_error: float = math.nan
    p_values: np.ndarray | None = None
    normality_pass_fraction: float = math.nan
    normality_anomalies: list = field(default_factory=list)


def asymptotic_report(
    model,
    delta,
    q_star,
    n_opinions,
    final_states=None,
    final_step_size=None,
    significance=0.01,
):
    """Assemble the asymptotic covariance report for one configuration.

    Uses the exact one-hot message covariance at the consensus limit.  When
    ``final_states`` from repeated trials are supplied (together with the
    step size of their last update), the empirical scaled covariance and
    per-component normality tests are attached.
    """
    q_star = np.asarray(q_star, dtype=float)
    basis = build_projection(model.n)
    wbar = mean_matrix(model)
    drift = reduced_drift(wbar, basis, n_opinions, delta)
    sigma = categorical_covariance(q_star, model.n)
    s0 = s0_matrix(wbar, basis, sigma, n_opinions)
    s = lyapunov_solve(drift.shifted, s0)
    report = AsymptoticReport(
        q_star=q_star,
        lambda2=drift.lambda2,
        delta=delta,
        stability_margin=joint_stability_margin(model, basis),
        sigma=sigma,
        s0=s0,
        s=s,
        s_tilde=s_tilde(s, basis, n_opinions),
        lyapunov_residual=lyapunov_residual(drift.shifted, s, s0),
    )
    if final_states is not None:
        if final_step_size is None:
            raise ValueError("final_step_size is required with final_states")
        cov, samples = empirical_scaled_covariance(
            final_states, q_star, basis, final_step_size
        )
        report.empirical_cov = cov
        report.cov_rel_error = float(
            np.linalg.norm(cov - s) / np.linalg.norm(s)
        )
        result = normality_test(samples, np.diag(s), significance)
        report.p_values = result.p_values
        report.normality_pass_fraction = result.pass_fraction
        report.normality_anomalies = result.anomalies
    return report
