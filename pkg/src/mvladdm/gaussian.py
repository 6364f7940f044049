"""Closed-form algebra for diagonal Gaussians.

Product-of-experts fusion against a standard-normal prior, KL to that prior
and location-scale sampling.  Each operation has a tensor form (``*_t``,
differentiable, row-batched) used by the sequence model and a plain numpy
form built on top of it, so training and the standalone API share one code
path.
"""
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import autodiff as ad
from .errors import NonPositivePrecision, ShapeMismatch

PRECISION_EPS = 1e-8
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class DiagonalGaussian:
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        var = np.atleast_1d(np.asarray(self.variance, dtype=np.float64))
        if mean.shape != var.shape or mean.ndim != 1:
            raise ShapeMismatch(f"mean {mean.shape} and variance {var.shape} must be equal-length vectors")
        if not np.all(var > 0):
            raise ValueError("variance must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @property
    def dim(self):
        return self.mean.shape[0]


@dataclass(frozen=True)
class FusedPosterior:
    """Fused Gaussian with mean ``gamma`` and diagonal variance ``lam``."""

    gamma: np.ndarray
    lam: np.ndarray
    members: tuple = (0,)

    def __post_init__(self):
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=np.float64))
        lam = np.atleast_1d(np.asarray(self.lam, dtype=np.float64))
        if gamma.shape != lam.shape:
            raise ShapeMismatch("gamma and lambda must have equal length")
        if not np.all(lam > 0):
            raise ValueError("lambda must be strictly positive")
        if len(self.members) == 0:
            raise ValueError("member set must be non-empty")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def dim(self):
        return self.gamma.shape[0]

    def as_gaussian(self):
        return DiagonalGaussian(self.gamma, self.lam)


def view_subsets(n_views):
    """All non-empty view subsets: singletons first, then by size, lexicographic."""
    out = []
    for k in range(1, n_views + 1):
        out.extend(combinations(range(n_views), k))
    return out


def fuse_t(means, precisions):
    """Tensor PoE fusion.  Returns ``(gamma, lam, precision)``.

    A single expert is passed through untouched (its mean is returned as the
    very same tensor).
    """
    if len(means) == 1:
        return means[0], ad.reciprocal(precisions[0]), precisions[0]
    prec = precisions[0]
    weighted = ad.mul(precisions[0], means[0])
    for m, p in zip(means[1:], precisions[1:]):
        prec = ad.add(prec, p)
        weighted = ad.add(weighted, ad.mul(p, m))
    prec = ad.add(prec, -float(len(means) - 1))
    lam = ad.reciprocal(prec)
    return ad.mul(lam, weighted), lam, prec


def kl_standard_t(gamma, lam):
    """Row-wise KL(N(gamma, lam) || N(0, I)) for (rows, d) tensors."""
    inner = ad.add(ad.sub(ad.add(lam, ad.square(gamma)), ad.log(lam)), -1.0)
    axis = None if len(gamma.shape) == 1 else 1
    return ad.mul(ad.sum_(inner, axis=axis), 0.5)


def poe_fuse(experts, members=None):
    """Product of diagonal Gaussian experts divided by ``len(experts) - 1``
    copies of the standard-normal prior."""
    if len(experts) == 0:
        raise ValueError("need at least one expert")
    d = experts[0].dim
    if any(e.dim != d for e in experts):
        raise ShapeMismatch("experts must share one dimension")
    members = tuple(range(len(experts))) if members is None else tuple(members)
    if len(experts) == 1:
        return FusedPosterior(experts[0].mean.copy(), experts[0].variance.copy(), members)
    precs = [1.0 / e.variance for e in experts]
    total = np.sum(precs, axis=0) - (len(experts) - 1)
    if not np.all(total > PRECISION_EPS):
        raise NonPositivePrecision(
            f"fused precision {total.min():.3g} <= {PRECISION_EPS}; experts too diffuse")
    gamma, lam, _ = fuse_t([ad.const(e.mean) for e in experts], [ad.const(p) for p in precs])
    return FusedPosterior(gamma.data, lam.data, members)


def kl_to_standard(post):
    return float(kl_standard_t(ad.const(post.gamma), ad.const(post.lam)).data)


def reparam_sample(post, noise):
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != post.gamma.shape:
        raise ShapeMismatch(f"noise shape {noise.shape} != {post.gamma.shape}")
    return post.gamma + np.sqrt(post.lam) * noise


def gaussian_log_density(x, g):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != g.mean.shape:
        raise ShapeMismatch(f"point shape {x.shape} != {g.mean.shape}")
    r = x - g.mean
    return float(-0.5 * (g.dim * LOG_2PI + np.sum(np.log(g.variance)) + np.sum(r * r / g.variance)))
