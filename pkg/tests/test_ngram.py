"""Autoregressive n-gram policies: enumeration, objectives, gradients."""
import numpy as np
import pytest

from klgeo.dist import FiniteDistribution, condition, kl_divergence_finite, total_variation
from klgeo.geometry import TiltedFamily
from klgeo.ngram import (
    ForwardKLObjective,
    JBetaObjective,
    NGramPolicy,
    SequenceSpace,
    TVDObjective,
    bigram_orders,
    conditional_projection,
    full_orders,
    grad_objective,
    make_verifier_first_equals_last,
    objective_value,
    project_policy,
    random_base_model,
    to_distribution,
)
from klgeo.optimize import verify_gradients
from klgeo.rng import SeededRng

SPACE = SequenceSpace(3, 3)


def toy_setup(seed=1):
    base_pol = random_base_model(SPACE, seed)
    base = to_distribution(base_pol)
    verifier = make_verifier_first_equals_last(SPACE)
    fam = TiltedFamily(base, verifier)
    pstar = condition(base, verifier.mask)
    return base_pol, base, verifier, fam, pstar


class TestSequenceSpace:
    def test_size(self):
        assert SPACE.n_sequences == 27
        assert SequenceSpace(2, 4).n_sequences == 16

    def test_lexicographic_order(self):
        outs = SPACE.outcomes()
        assert outs[0] == (0, 0, 0)
        assert outs[1] == (0, 0, 1)
        assert outs[3] == (0, 1, 0)
        assert outs[-1] == (2, 2, 2)
        # position 0 is most significant
        for idx, seq in enumerate(outs):
            assert idx == seq[0] * 9 + seq[1] * 3 + seq[2]

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            SequenceSpace(0, 3)


class TestParameterCounts:
    def test_bigram_is_21(self):
        pol = NGramPolicy(SPACE, bigram_orders(SPACE), np.zeros(21))
        assert pol.n_params == 21
        shapes = [b.shape for b in pol.blocks()]
        assert shapes == [(1, 3), (3, 3), (3, 3)]

    def test_full_is_39(self):
        pol = NGramPolicy(SPACE, full_orders(SPACE), np.zeros(39))
        assert pol.n_params == 39
        shapes = [b.shape for b in pol.blocks()]
        assert shapes == [(1, 3), (3, 3), (9, 3)]

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            NGramPolicy(SPACE, bigram_orders(SPACE), np.zeros(20))

    def test_context_cannot_exceed_position(self):
        with pytest.raises(ValueError):
            NGramPolicy(SPACE, (1, 1, 1), np.zeros(27))


class TestToDistribution:
    def test_zero_logits_uniform(self):
        pol = NGramPolicy(SPACE, bigram_orders(SPACE), np.zeros(21))
        d = to_distribution(pol)
        assert np.allclose(d.probs, 1.0 / 27, atol=1e-15)

    def test_normalized_for_random_draws(self):
        rng = SeededRng(99)
        for _ in range(100):
            pol = NGramPolicy(SPACE, bigram_orders(SPACE), rng.normal(21, sigma=2.0))
            assert to_distribution(pol).probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_product_of_conditionals(self):
        pol = random_base_model(SPACE, seed=5)
        d = to_distribution(pol)
        b0, b1, b2 = [np.exp(b - np.log(np.exp(b).sum(axis=1, keepdims=True)))
                      for b in pol.blocks()]
        for seq in ((0, 0, 0), (1, 2, 0), (2, 1, 2)):
            manual = (b0[0, seq[0]] * b1[seq[0], seq[1]]
                      * b2[seq[0] * 3 + seq[1], seq[2]])
            assert d.prob(seq) == pytest.approx(manual, abs=1e-14)

    def test_copy_biased_bigram_concentrates_on_diagonal(self):
        logits = np.zeros(21)
        pol = NGramPolicy(SPACE, bigram_orders(SPACE), logits)
        blocks = [np.zeros((1, 3)), 6.0 * np.eye(3), 6.0 * np.eye(3)]
        pol = pol.with_logits(np.concatenate([b.ravel() for b in blocks]))
        d = to_distribution(pol)
        diag_mass = sum(d.prob((v, v, v)) for v in range(3))
        assert diag_mass > 0.99


class TestVerifier:
    def test_valid_count(self):
        v = make_verifier_first_equals_last(SPACE)
        assert len(v.valid_indices) == 9

    def test_membership(self):
        v = make_verifier_first_equals_last(SPACE)
        outs = SPACE.outcomes()
        assert v.mask[outs.index((0, 1, 0))]
        assert not v.mask[outs.index((0, 1, 2))]

    def test_uniform_validity(self):
        v = make_verifier_first_equals_last(SPACE)
        u = FiniteDistribution.uniform(SPACE.outcomes())
        assert float(u.probs @ v.values) == pytest.approx(1.0 / 3.0, abs=1e-14)

    def test_needs_length_two(self):
        with pytest.raises(ValueError):
            make_verifier_first_equals_last(SequenceSpace(3, 1))


class TestRandomBaseModel:
    def test_deterministic(self):
        a = random_base_model(SPACE, seed=7)
        b = random_base_model(SPACE, seed=7)
        assert np.array_equal(a.logits, b.logits)

    def test_small_sigma_near_uniform(self):
        pol = random_base_model(SPACE, seed=3, sigma=1e-6)
        v = make_verifier_first_equals_last(SPACE)
        d = to_distribution(pol)
        assert float(d.probs @ v.values) == pytest.approx(1.0 / 3.0, abs=1e-5)

    def test_a1_band_across_seeds(self):
        v = make_verifier_first_equals_last(SPACE)
        for seed in range(1, 9):
            d = to_distribution(random_base_model(SPACE, seed))
            a1 = float(d.probs @ v.values)
            assert 0.20 <= a1 <= 0.47

    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(ValueError):
            random_base_model(SPACE, seed=1, sigma=0.0)


class TestGradients:
    def test_j_beta_matches_finite_differences(self):
        _, _, _, fam, _ = toy_setup()
        for seed in (2, 3):
            pol = NGramPolicy(SPACE, bigram_orders(SPACE),
                              SeededRng(seed).normal(21))
            err = verify_gradients(pol, JBetaObjective(fam, beta=0.2))
            assert err < 1e-7

    def test_forward_kl_matches_finite_differences(self):
        _, _, _, _, pstar = toy_setup()
        for seed in (2, 3):
            pol = NGramPolicy(SPACE, bigram_orders(SPACE),
                              SeededRng(seed).normal(21))
            err = verify_gradients(pol, ForwardKLObjective(pstar))
            assert err < 1e-7

    def test_tvd_gradient_matches_loop_fd(self):
        # the batched central differences agree with a plain per-coordinate loop
        _, _, _, _, pstar = toy_setup()
        pol = NGramPolicy(SPACE, bigram_orders(SPACE), SeededRng(4).normal(21))
        obj = TVDObjective(pstar)
        g = grad_objective(pol, obj)
        h = obj.h
        for i in (0, 7, 20):
            e = np.zeros(21)
            e[i] = h
            fd = (objective_value(pol.with_logits(pol.logits + e), obj)
                  - objective_value(pol.with_logits(pol.logits - e), obj)) / (2 * h)
            assert g[i] == pytest.approx(fd, abs=1e-12)

    def test_forward_kl_zero_gradient_at_optimum(self):
        # well-specified target: the projection is stationary
        target = to_distribution(random_base_model(SPACE, seed=8))
        proj = conditional_projection(target, SPACE, full_orders(SPACE))
        g = grad_objective(proj, ForwardKLObjective(target))
        assert np.abs(g).max() < 1e-8

    def test_forward_kl_convex_along_segments(self):
        _, _, _, _, pstar = toy_setup()
        obj = ForwardKLObjective(pstar)
        rng = SeededRng(21)
        for _ in range(20):
            a = rng.normal(21, sigma=2.0)
            b = rng.normal(21, sigma=2.0)
            pa = NGramPolicy(SPACE, bigram_orders(SPACE), a)
            pb = pa.with_logits(b)
            pm = pa.with_logits(0.5 * (a + b))
            mid = objective_value(pm, obj)
            avg = 0.5 * (objective_value(pa, obj) + objective_value(pb, obj))
            assert mid <= avg + 1e-10

    def test_space_mismatch_rejected(self):
        target = FiniteDistribution.uniform(tuple(range(8)))
        pol = NGramPolicy(SPACE, bigram_orders(SPACE), np.zeros(21))
        with pytest.raises(ValueError):
            grad_objective(pol, ForwardKLObjective(target))


class TestConditionalProjection:
    def test_full_order_reproduces_strictly_positive_target(self):
        target = to_distribution(random_base_model(SPACE, seed=6))
        proj = conditional_projection(target, SPACE, full_orders(SPACE))
        assert total_variation(to_distribution(proj), target) < 1e-12

    def test_projection_beats_random_bigram(self):
        base_pol, base, _, _, _ = toy_setup()
        proj = project_policy(base_pol, bigram_orders(SPACE))
        rand = NGramPolicy(SPACE, bigram_orders(SPACE), SeededRng(2).normal(21))
        kl_proj = kl_divergence_finite(base, to_distribution(proj))
        kl_rand = kl_divergence_finite(base, to_distribution(rand))
        assert kl_proj < kl_rand

    def test_projection_is_forward_kl_stationary(self):
        base_pol, base, _, _, _ = toy_setup()
        proj = project_policy(base_pol, bigram_orders(SPACE))
        g = grad_objective(proj, ForwardKLObjective(base))
        assert np.abs(g).max() < 1e-10

    def test_zero_mass_targets_get_exact_zeros(self):
        _, _, _, _, pstar = toy_setup()
        proj = conditional_projection(pstar, SPACE, full_orders(SPACE))
        q = to_distribution(proj)
        # the projection of the filtered model reproduces it, zeros included
        assert kl_divergence_finite(pstar, q) < 1e-12
        assert np.all(q.probs[pstar.probs == 0.0] == 0.0)

    def test_order_monotonicity(self):
        # richer families project at least as close, seed by seed
        for seed in range(1, 9):
            _, _, _, _, pstar = toy_setup(seed)
            big = conditional_projection(pstar, SPACE, bigram_orders(SPACE))
            full = conditional_projection(pstar, SPACE, full_orders(SPACE))
            kl_big = kl_divergence_finite(pstar, to_distribution(big))
            kl_full = kl_divergence_finite(pstar, to_distribution(full))
            assert kl_full <= kl_big + 1e-12

    def test_bigram_cannot_reach_filtered_model(self):
        for seed in range(1, 9):
            _, _, _, _, pstar = toy_setup(seed)
            big = conditional_projection(pstar, SPACE, bigram_orders(SPACE))
            assert kl_divergence_finite(pstar, to_distribution(big)) > 0.3
