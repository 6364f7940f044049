"""Synthetic multi-view behaviour sequences.

Labels follow a Markov chain started from its stationary distribution.
Class ``n`` seen through view ``v`` emits ``N(mean[n, v], std^2 I)`` when
visible in that view and the shared background ``N(0, std^2 I)`` otherwise,
so a view carries no information about the classes it cannot see beyond
"one of the invisible ones".
"""
from dataclasses import dataclass

import numpy as np

from .data import MultiViewSequence
from .errors import InvalidSpec

STREAM_GENERATOR = 4


def reversible_transition(weights, self_transition=0.9, forbidden=()):
    """Row-stochastic matrix with stationary distribution ``weights``.

    Off-diagonal moves are ``P[i, j] = k * A[i, j] * w[j]`` with ``A`` a
    symmetric 0/1 mask (``forbidden`` pairs zeroed in both directions), which
    satisfies detailed balance for ``w``.  ``k`` is chosen so that the
    expected self-transition probability under ``w`` is ``self_transition``.
    Individual diagonal entries therefore vary around that value.
    """
    w = np.asarray(weights, dtype=np.float64)
    N = w.shape[0]
    mask = 1.0 - np.eye(N)
    for i, j in forbidden:
        mask[i, j] = mask[j, i] = 0.0
    move = mask * w[None, :]
    flow = float(w @ move.sum(axis=1))
    if N == 1 or flow == 0.0:
        return np.eye(N)
    k = (1.0 - self_transition) / flow
    P = k * move
    if np.any(P.sum(axis=1) > 1.0):
        raise InvalidSpec("self-transition too small for these class weights")
    P[np.diag_indices(N)] = 1.0 - P.sum(axis=1)
    return P


def stationary_distribution(P):
    vals, vecs = np.linalg.eig(np.asarray(P, dtype=np.float64).T)
    k = int(np.argmin(np.abs(vals - 1.0)))
    pi = np.real(vecs[:, k])
    return pi / pi.sum()


@dataclass
class GeneratorSpec:
    n_views: int = 2
    n_classes: int = 4
    frames: int = 200
    feature_dims: tuple = (8, 8)
    transition: np.ndarray = None
    means: list = None
    std: float = 1.0
    visibility: np.ndarray = None
    imbalance: np.ndarray = None
    seed: int = 0
    separation: float = 4.0
    self_transition: float = 0.9
    forbidden: tuple = ()

    def __post_init__(self):
        N, V = self.n_classes, self.n_views
        if N < 1 or V < 1 or self.frames < 1:
            raise InvalidSpec("views, classes and frames must be >= 1")
        self.feature_dims = tuple(int(d) for d in self.feature_dims)
        if len(self.feature_dims) != V or min(self.feature_dims) < 1:
            raise InvalidSpec("feature_dims must give one positive size per view")
        if not self.std > 0:
            raise InvalidSpec("std must be > 0")
        if self.imbalance is None:
            self.imbalance = np.full(N, 1.0 / N)
        self.imbalance = np.asarray(self.imbalance, dtype=np.float64)
        if self.imbalance.shape != (N,) or np.any(self.imbalance <= 0) or abs(self.imbalance.sum() - 1) > 1e-9:
            raise InvalidSpec("imbalance must be N positive weights summing to 1")
        if self.transition is None:
            self.transition = reversible_transition(self.imbalance, self.self_transition, self.forbidden)
        self.transition = np.asarray(self.transition, dtype=np.float64)
        P = self.transition
        if P.shape != (N, N) or np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1) > 1e-9):
            raise InvalidSpec("transition must be an N x N row-stochastic matrix")
        if np.max(np.abs(self.imbalance @ P - self.imbalance)) > 1e-6:
            raise InvalidSpec("imbalance is not the stationary distribution of the transition matrix")
        if self.visibility is None:
            self.visibility = np.ones((N, V), dtype=bool)
        self.visibility = np.asarray(self.visibility, dtype=bool)
        if self.visibility.shape != (N, V):
            raise InvalidSpec("visibility must be N x V")
        if not np.all(self.visibility.any(axis=1)):
            raise InvalidSpec("every class must be visible in at least one view")
        if self.means is None:
            self.means = []
            for n in range(N):
                row = []
                for v, D in enumerate(self.feature_dims):
                    if N > D:
                        raise InvalidSpec(f"view {v}: {N} classes need feature dim >= {N} for axis-aligned means")
                    m = np.zeros(D)
                    m[n] = self.separation * self.std
                    row.append(m)
                self.means.append(row)
        else:
            self.means = [[np.asarray(m, dtype=np.float64) for m in row] for row in self.means]
            if len(self.means) != N or any(len(r) != V for r in self.means):
                raise InvalidSpec("means must be given per (class, view)")
            for row in self.means:
                for v, m in enumerate(row):
                    if m.shape != (self.feature_dims[v],):
                        raise InvalidSpec(f"emission mean for view {v} has wrong length")


def default_spec(seed=0):
    """V=2, N=4, T=200, D=8; class 0 only in view 0, class 1 only in view 1,
    classes 2 and 3 in both; skewed class weights; classes 1 and 3 never
    follow each other."""
    vis = np.array([[1, 0], [0, 1], [1, 1], [1, 1]], dtype=bool)
    return GeneratorSpec(n_views=2, n_classes=4, frames=200, feature_dims=(8, 8), std=1.0,
                         separation=4.0, visibility=vis,
                         imbalance=np.array([0.55, 0.25, 0.15, 0.05]),
                         self_transition=0.9, forbidden=((1, 3),), seed=seed)


def sample_labels(spec, T, rng):
    cum_start = np.cumsum(spec.imbalance)
    cum = np.cumsum(spec.transition, axis=1)
    u = rng.random(T)
    y = np.empty(T, dtype=np.int64)
    y[0] = min(int(np.searchsorted(cum_start, u[0], side="right")), spec.n_classes - 1)
    for t in range(1, T):
        y[t] = min(int(np.searchsorted(cum[y[t - 1]], u[t], side="right")), spec.n_classes - 1)
    return y


def generate(spec, count, seed=None):
    """``count`` sequences; deterministic given ``seed`` (defaults to ``spec.seed``)."""
    if count < 1:
        raise InvalidSpec("count must be >= 1")
    seed = spec.seed if seed is None else seed
    rng = np.random.default_rng([seed, STREAM_GENERATOR])
    out = []
    T = spec.frames
    for k in range(count):
        y = sample_labels(spec, T, rng)
        views = []
        for v, D in enumerate(spec.feature_dims):
            x = spec.std * rng.standard_normal((T, D))
            for n in range(spec.n_classes):
                if spec.visibility[n, v]:
                    x[y == n] += spec.means[n][v]
            views.append(x)
        out.append(MultiViewSequence(views=views, labels=y, id=f"seq{k:04d}"))
    return out


def split_dataset(seqs, train_fraction=0.8, seed=0):
    """Seeded shuffle, then the first ``round(train_fraction * n)`` go to train."""
    rng = np.random.default_rng([seed, 5])
    order = rng.permutation(len(seqs))
    n_train = int(round(train_fraction * len(seqs)))
    return [seqs[i] for i in order[:n_train]], [seqs[i] for i in order[n_train:]]
