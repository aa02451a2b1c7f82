"""Random weight-matrix models, connectivity checks, and spectral utilities.

Edge convention: entry ``w[i, j] > 0`` means agent i receives from agent j.
All admissible weight matrices are doubly stochastic, which is what makes the
network average a conserved quantity under the protocol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DS_TOL = 1e-12

FIXED = "fixed"
IID = "iid-finite-support"
BIRKHOFF = "birkhoff-random"
SWITCHING = "switching-periodic"
KINDS = (FIXED, IID, BIRKHOFF, SWITCHING)


def validate_doubly_stochastic(w, tol=DS_TOL):
    """True iff ``w`` is nonnegative with unit row and column sums (within tol)."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("weight matrix must be square")
    if (w < 0).any():
        return False
    rows_ok = np.abs(w.sum(axis=1) - 1.0) <= tol
    cols_ok = np.abs(w.sum(axis=0) - 1.0) <= tol
    return bool(rows_ok.all() and cols_ok.all())


def metropolis_complete(n):
    """Equal weights on the complete graph with self-loops: all entries 1/n."""
    if n < 1:
        raise ValueError("need at least one agent")
    return np.full((n, n), 1.0 / n)


def _frozen(a):
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class WeightMatrixModel:
    """Generator of the weight-matrix sequence and its exact mean.

    Kinds:

    * ``fixed``: the single support matrix at every step.
    * ``iid-finite-support``: each step draws one support matrix by the given
      probabilities, independently of everything else.
    * ``birkhoff-random``: each step returns ``mixing[0] * I`` plus
      ``mixing[r]`` times a fresh uniformly random permutation matrix for
      each remaining coefficient; always doubly stochastic by construction.
    * ``switching-periodic``: deterministic round-robin ``support[k % period]``
      (used for joint-connectivity experiments).

    ``tau`` lower-bounds the nonzero entries of every per-step mean matrix;
    ``window`` is the joint-connectivity horizon (union over ``window + 1``
    consecutive mean graphs).
    """

    kind: str
    n: int
    support: tuple = ()
    probabilities: tuple = ()
    permutation_count: int = 0
    mixing: tuple = ()
    tau: float = 1e-6
    window: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown weight model kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("model needs at least one agent")
        if self.window < 0:
            raise ValueError("window must be nonnegative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        object.__setattr__(self, "support", tuple(_frozen(w) for w in self.support))
        object.__setattr__(
            self, "probabilities", tuple(float(p) for p in self.probabilities)
        )
        object.__setattr__(self, "mixing", tuple(float(c) for c in self.mixing))

        if self.kind in (FIXED, IID, SWITCHING):
            if not self.support:
                raise ValueError("empty support: no weight matrix to draw")
            for idx, w in enumerate(self.support):
                if w.shape != (self.n, self.n):
                    raise ValueError(
                        f"support matrix {idx} has shape {w.shape}, expected "
                        f"({self.n}, {self.n})"
                    )
                if not validate_doubly_stochastic(w):
                    raise ValueError(
                        f"A2 violated: support matrix {idx} is not doubly stochastic"
                    )
        if self.kind == FIXED and len(self.support) != 1:
            raise ValueError("fixed model takes exactly one support matrix")
        if self.kind == IID:
            if len(self.probabilities) != len(self.support):
                raise ValueError("need one probability per support matrix")
            if any(p < 0 for p in self.probabilities):
                raise ValueError("selection probabilities must be nonnegative")
            if abs(sum(self.probabilities) - 1.0) > DS_TOL:
                raise ValueError("selection probabilities must sum to 1")
        if self.kind == BIRKHOFF:
            if self.permutation_count < 1:
                raise ValueError("birkhoff model needs at least one permutation")
            if len(self.mixing) != self.permutation_count + 1:
                raise ValueError(
                    "mixing needs one identity weight plus one weight per permutation"
                )
            if any(c < 0 for c in self.mixing):
                raise ValueError("mixing weights must be nonnegative")
            if abs(sum(self.mixing) - 1.0) > DS_TOL:
                raise ValueError("mixing weights must sum to 1")

        # A2 lower bound tau applies to the nonzero entries of every
        # per-step mean matrix.
        period = len(self.support) if self.kind == SWITCHING else 1
        for k in range(period):
            wbar = step_mean_matrix(self, k)
            nz = wbar[wbar > 0]
            if nz.size and nz.min() < self.tau:
                raise ValueError(
                    f"A2 violated: nonzero mean weight {nz.min():.3g} below "
                    f"tau = {self.tau:.3g}"
                )


def fixed_model(w, tau=1e-6, window=0):
    w = np.asarray(w, dtype=float)
    return WeightMatrixModel(FIXED, w.shape[0], support=(w,), tau=tau, window=window)


def iid_model(support, probabilities, tau=1e-6, window=0):
    support = tuple(np.asarray(w, dtype=float) for w in support)
    return WeightMatrixModel(
        IID, support[0].shape[0], support=support, probabilities=tuple(probabilities),
        tau=tau, window=window,
    )


def birkhoff_model(n, mixing, tau=1e-6, window=0):
    mixing = tuple(mixing)
    return WeightMatrixModel(
        BIRKHOFF, n, permutation_count=len(mixing) - 1, mixing=mixing,
        tau=tau, window=window,
    )


def switching_model(support, tau=1e-6, window=0):
    support = tuple(np.asarray(w, dtype=float) for w in support)
    return WeightMatrixModel(
        SWITCHING, support[0].shape[0], support=support, tau=tau, window=window,
    )


def sample_weight_matrix(model, k, rng=None):
    """Weight matrix for step ``k``; random kinds draw from ``rng``."""
    if model.kind == FIXED:
        return model.support[0]
    if model.kind == SWITCHING:
        return model.support[k % len(model.support)]
    if rng is None:
        raise ValueError("random weight model needs a random stream")
    if model.kind == IID:
        idx = int(rng.choice(len(model.support), p=np.asarray(model.probabilities)))
        return model.support[idx]
    w = model.mixing[0] * np.eye(model.n)
    for c in model.mixing[1:]:
        perm = rng.permutation(model.n)
        w[np.arange(model.n), perm] += c
    return w


def mean_matrix(model):
    """Exact expectation of the sampled weight matrix.

    For the switching kind this is the average over one period; a uniformly
    random permutation has mean ``1/n`` in every entry, which gives the
    birkhoff mean in closed form.
    """
    if model.kind == FIXED:
        return model.support[0].copy()
    if model.kind == IID:
        out = np.zeros((model.n, model.n))
        for p, w in zip(model.probabilities, model.support):
            out += p * w
        return out
    if model.kind == SWITCHING:
        return sum(model.support) / len(model.support)
    c0 = model.mixing[0]
    return c0 * np.eye(model.n) + (1.0 - c0) * metropolis_complete(model.n)


def step_mean_matrix(model, k):
    """Mean of the step-``k`` matrix: per-period entry for switching models."""
    if model.kind == SWITCHING:
        return model.support[k % len(model.support)]
    return mean_matrix(model)


def topology(w, tol=0.0):
    """Boolean adjacency of a weight matrix: edges where the weight exceeds tol."""
    return np.asarray(w, dtype=float) > tol


def _reaches_all(adj, start):
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        nxt = adj[frontier].any(axis=0) & ~seen
        seen |= nxt
        frontier = np.flatnonzero(nxt).tolist()
    return bool(seen.all())


def strongly_connected(adj):
    """True iff every ordered pair of nodes is joined by a directed path."""
    a = np.asarray(adj, dtype=bool)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    if a.shape[0] == 1:
        return True
    return _reaches_all(a, 0) and _reaches_all(a.T, 0)


def union_window_connected(mean_mats, window):
    """Strong connectivity of the cyclic union over ``window + 1`` mean graphs."""
    mats = [np.asarray(w, dtype=float) for w in mean_mats]
    period = len(mats)
    for offset in range(period):
        acc = np.zeros_like(mats[0])
        for s in range(window + 1):
            acc = acc + mats[(offset + s) % period]
        if not strongly_connected(topology(acc)):
            return False
    return True


def jointly_connected(model):
    """True iff every window of mean graphs of length ``window + 1`` connects."""
    if model.kind == SWITCHING:
        return union_window_connected(model.support, model.window)
    return union_window_connected([mean_matrix(model)], model.window)


def spectral_gap(wbar):
    """``1 - lambda2`` of the symmetrized mean matrix.

    ``lambda2`` is the second-largest eigenvalue of ``(wbar + wbar.T) / 2``;
    the gap is positive iff the mean graph mixes.
    """
    w = np.asarray(wbar, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("weight matrix must be square")
    if w.shape[0] < 2:
        raise ValueError("spectral gap needs at least two agents")
    eigs = np.linalg.eigvalsh((w + w.T) / 2.0)
    return float(1.0 - eigs[-2])
