"""Logit-parametrized autoregressive policies over V^T with exact enumeration.

A policy is a product of per-position softmax conditionals.  The context
order is per-position data: context length 0 at every position gives a
unigram product, (0, 1, 1, ...) is the bigram family (next token depends on
the previous token only), and (0, 1, 2, ..., T-1) is the full-order family,
which can represent any strictly positive distribution over V^T.

All distributions, objectives and gradients are computed by enumerating the
V^T sequences; there is no sampling anywhere.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .dist import BinaryVerifier, FiniteDistribution, kl_divergence_finite, total_variation
from .geometry import TiltedFamily
from .rng import SeededRng

# Central-difference step used for TVD gradients and for gradient verification.
FD_STEP = 1e-5


@dataclass(frozen=True)
class SequenceSpace:
    """All token sequences of a fixed length over a fixed vocabulary.

    Enumeration is lexicographic with position 0 most significant, so the
    sequence (t0, ..., t_{T-1}) has index sum_k t_k * V^(T-1-k).
    """

    vocab_size: int
    length: int

    def __post_init__(self):
        if self.vocab_size < 1 or self.length < 1:
            raise ValueError("vocab_size and length must be positive")

    @property
    def n_sequences(self) -> int:
        return self.vocab_size ** self.length

    def outcomes(self) -> tuple:
        return tuple(itertools.product(range(self.vocab_size), repeat=self.length))


def bigram_orders(space: SequenceSpace) -> tuple:
    return (0,) + (1,) * (space.length - 1)


def full_orders(space: SequenceSpace) -> tuple:
    return tuple(range(space.length))


class _Structure:
    """Precomputed index arrays tying sequences to softmax blocks.

    For each position t there is one softmax block of shape (V^c_t, V); the
    arrays ctx[t] and tok[t] give, per sequence, the row and column of that
    block contributing to the sequence's log probability.
    """

    _cache: dict = {}

    def __init__(self, space: SequenceSpace, context_lengths: tuple):
        V, T = space.vocab_size, space.length
        if len(context_lengths) != T:
            raise ValueError("need one context length per position")
        for t, c in enumerate(context_lengths):
            if not 0 <= c <= t:
                raise ValueError(f"context length at position {t} must be in [0, {t}]")
        seqs = np.array(space.outcomes(), dtype=np.intp)  # (N, T)
        self.space = space
        self.context_lengths = tuple(context_lengths)
        self.block_shapes = [(V ** c, V) for c in context_lengths]
        self.offsets = np.concatenate([[0], np.cumsum([nc * V for nc, V in self.block_shapes])])
        self.n_params = int(self.offsets[-1])
        self.ctx = []
        self.tok = []
        self.flat = []
        for t, c in enumerate(context_lengths):
            ctx = np.zeros(space.n_sequences, dtype=np.intp)
            for k in range(c):
                ctx = ctx * V + seqs[:, t - c + k]
            tok = seqs[:, t].copy()
            self.ctx.append(ctx)
            self.tok.append(tok)
            self.flat.append(ctx * V + tok)

    @classmethod
    def get(cls, space: SequenceSpace, context_lengths: tuple) -> "_Structure":
        key = (space.vocab_size, space.length, tuple(context_lengths))
        if key not in cls._cache:
            cls._cache[key] = cls(space, context_lengths)
        return cls._cache[key]


class NGramPolicy:
    """An autoregressive policy: per-position softmax blocks over a flat logit vector."""

    __slots__ = ("space", "context_lengths", "logits", "_struct")

    def __init__(self, space: SequenceSpace, context_lengths, logits):
        struct = _Structure.get(space, tuple(context_lengths))
        logits = np.array(logits, dtype=float)
        if logits.shape != (struct.n_params,):
            raise ValueError(f"expected {struct.n_params} logits, got {logits.shape}")
        logits.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "context_lengths", struct.context_lengths)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "_struct", struct)

    def __setattr__(self, name, value):
        raise AttributeError("NGramPolicy is immutable; use with_logits")

    @property
    def n_params(self) -> int:
        return self._struct.n_params

    def with_logits(self, logits) -> "NGramPolicy":
        return NGramPolicy(self.space, self.context_lengths, logits)

    def blocks(self):
        """The logits reshaped into their per-position (n_contexts, V) blocks."""
        s = self._struct
        return [self.logits[s.offsets[t]:s.offsets[t + 1]].reshape(shape)
                for t, shape in enumerate(s.block_shapes)]


def _log_softmax_blocks(struct: _Structure, theta: np.ndarray):
    out = []
    for t, (nc, V) in enumerate(struct.block_shapes):
        z = theta[struct.offsets[t]:struct.offsets[t + 1]].reshape(nc, V)
        m = z.max(axis=1, keepdims=True)
        e = np.exp(z - m)
        out.append((z - m) - np.log(e.sum(axis=1, keepdims=True)))
    return out


def _log_probs(struct: _Structure, theta: np.ndarray) -> np.ndarray:
    lsm = _log_softmax_blocks(struct, theta)
    logq = lsm[0][struct.ctx[0], struct.tok[0]].copy()
    for t in range(1, len(lsm)):
        logq += lsm[t][struct.ctx[t], struct.tok[t]]
    return logq


def _probs(struct: _Structure, theta: np.ndarray) -> np.ndarray:
    return np.exp(_log_probs(struct, theta))


def _grad_weighted_logprob(struct: _Structure, theta: np.ndarray,
                           w: np.ndarray) -> np.ndarray:
    """Gradient of sum_s w_s * log q_s in the logits, for fixed weights w."""
    lsm = _log_softmax_blocks(struct, theta)
    grad = np.empty(struct.n_params)
    for t, (nc, V) in enumerate(struct.block_shapes):
        sw = np.bincount(struct.flat[t], weights=w, minlength=nc * V).reshape(nc, V)
        sc = sw.sum(axis=1, keepdims=True)
        g = sw - np.exp(lsm[t]) * sc
        grad[struct.offsets[t]:struct.offsets[t + 1]] = g.ravel()
    return grad


def _batched_probs(struct: _Structure, thetas: np.ndarray) -> np.ndarray:
    """Sequence probabilities for a (B, n_params) batch of logit vectors."""
    B = thetas.shape[0]
    logq = np.zeros((B, struct.space.n_sequences))
    for t, (nc, V) in enumerate(struct.block_shapes):
        z = thetas[:, struct.offsets[t]:struct.offsets[t + 1]].reshape(B, nc, V)
        m = z.max(axis=2, keepdims=True)
        e = np.exp(z - m)
        lsm = (z - m) - np.log(e.sum(axis=2, keepdims=True))
        logq += lsm[:, struct.ctx[t], struct.tok[t]]
    return np.exp(logq)


def to_distribution(pol: NGramPolicy) -> FiniteDistribution:
    """The induced distribution over V^T, by exact enumeration."""
    return FiniteDistribution(pol.space.outcomes(), _probs(pol._struct, pol.logits))


# ---------------------------------------------------------------------------
# Objectives


class JBetaObjective:
    """E_pi[r] - beta * KL(pi, base), as a function of the policy logits."""

    name = "j_beta"
    analytic = True

    def __init__(self, fam: TiltedFamily, beta: float):
        if beta <= 0:
            raise ValueError("beta must be positive")
        self.fam = fam
        self.beta = float(beta)
        self._r = fam.reward.values
        self._log_base = np.log(fam.base.probs)

    def _check(self, struct: _Structure):
        if struct.space.n_sequences != self._r.shape[0]:
            raise ValueError("objective target does not match the policy's space")

    def value_theta(self, struct: _Structure, theta: np.ndarray) -> float:
        self._check(struct)
        logq = _log_probs(struct, theta)
        q = np.exp(logq)
        return float(q @ self._r - self.beta * (q @ (logq - self._log_base)))

    def grad_theta(self, struct: _Structure, theta: np.ndarray) -> np.ndarray:
        self._check(struct)
        logq = _log_probs(struct, theta)
        q = np.exp(logq)
        # d/dtheta sum_s q_s f_s with f = r - beta(log q - log base); the
        # -beta * sum q dlogq correction vanishes because sum dq = 0
        f = self._r - self.beta * (logq - self._log_base)
        return _grad_weighted_logprob(struct, theta, q * f)


class ForwardKLObjective:
    """KL(target, pi) as a function of the policy logits; convex in them."""

    name = "forward_kl"
    analytic = True

    def __init__(self, target: FiniteDistribution):
        self.target = target
        self._p = target.probs
        pm = self._p[self._p > 0]
        self._neg_entropy = float(np.sum(pm * np.log(pm)))

    def _check(self, struct: _Structure):
        if struct.space.n_sequences != self._p.shape[0]:
            raise ValueError("objective target does not match the policy's space")

    def value_theta(self, struct: _Structure, theta: np.ndarray) -> float:
        self._check(struct)
        logq = _log_probs(struct, theta)
        mask = self._p > 0
        return float(self._neg_entropy - self._p[mask] @ logq[mask])

    def grad_theta(self, struct: _Structure, theta: np.ndarray) -> np.ndarray:
        self._check(struct)
        # per block: (target block-marginal) * (softmax - onehot), aggregated
        return -_grad_weighted_logprob(struct, theta, self._p)


class TVDObjective:
    """TVD(pi, target) in the logits; non-convex, differentiated by central differences."""

    name = "tvd"
    analytic = False

    def __init__(self, target: FiniteDistribution, h: float = FD_STEP):
        self.target = target
        self._p = target.probs
        self.h = float(h)

    def _check(self, struct: _Structure):
        if struct.space.n_sequences != self._p.shape[0]:
            raise ValueError("objective target does not match the policy's space")

    def value_theta(self, struct: _Structure, theta: np.ndarray) -> float:
        self._check(struct)
        return 0.5 * float(np.abs(_probs(struct, theta) - self._p).sum())

    def grad_theta(self, struct: _Structure, theta: np.ndarray) -> np.ndarray:
        self._check(struct)
        n = theta.shape[0]
        eye = self.h * np.eye(n)
        thetas = np.concatenate([theta + eye, theta - eye], axis=0)
        q = _batched_probs(struct, thetas)
        vals = 0.5 * np.abs(q - self._p).sum(axis=1)
        return (vals[:n] - vals[n:]) / (2.0 * self.h)


def grad_objective(pol: NGramPolicy, objective) -> np.ndarray:
    """Gradient of the objective in the policy's flat logit vector."""
    return objective.grad_theta(pol._struct, pol.logits)


def objective_value(pol: NGramPolicy, objective) -> float:
    return objective.value_theta(pol._struct, pol.logits)


# ---------------------------------------------------------------------------
# Construction helpers


def make_verifier_first_equals_last(space: SequenceSpace) -> BinaryVerifier:
    """Verifier accepting sequences whose first token equals their last."""
    if space.length < 2:
        raise ValueError("first-equals-last verifier needs length >= 2")
    mask = np.array([seq[0] == seq[-1] for seq in space.outcomes()])
    return BinaryVerifier(mask)


def random_base_model(space: SequenceSpace, seed: int, sigma: float = 0.5) -> NGramPolicy:
    """A full-order policy with i.i.d. Gaussian logits (sigma is the std dev)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    struct = _Structure.get(space, full_orders(space))
    logits = SeededRng(seed).normal(struct.n_params, sigma=sigma)
    return NGramPolicy(space, full_orders(space), logits)


def conditional_projection(target: FiniteDistribution, space: SequenceSpace,
                           context_lengths) -> NGramPolicy:
    """The forward-KL-optimal policy of the given order for this target.

    Minimizing KL(target, pi) decouples across softmax blocks; the optimum
    matches the target's conditional distribution aggregated by context.
    Zero conditional probabilities become -inf logits (the optimum lies in
    the closure of the family); contexts with no target mass get uniform
    conditionals.
    """
    struct = _Structure.get(space, tuple(context_lengths))
    if len(target) != space.n_sequences:
        raise ValueError("target does not match the sequence space")
    logits = np.empty(struct.n_params)
    for t, (nc, V) in enumerate(struct.block_shapes):
        joint = np.bincount(struct.flat[t], weights=target.probs,
                            minlength=nc * V).reshape(nc, V)
        row = joint.sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(row > 0, joint / np.where(row > 0, row, 1.0), 1.0 / V)
            block = np.log(cond)
        logits[struct.offsets[t]:struct.offsets[t + 1]] = block.ravel()
    return NGramPolicy(space, context_lengths, logits)


def project_policy(pol: NGramPolicy, context_lengths) -> NGramPolicy:
    """Project a policy onto a (typically lower-order) family by forward KL."""
    return conditional_projection(to_distribution(pol), pol.space, context_lengths)


def policy_metrics(pol: NGramPolicy, target: FiniteDistribution) -> dict:
    """Forward KL from the target and TVD to it, for reporting."""
    q = to_distribution(pol)
    return {
        "forward_kl": kl_divergence_finite(target, q),
        "tvd": total_variation(q, target),
    }
