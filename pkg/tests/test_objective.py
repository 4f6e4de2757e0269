import math

import numpy as np
import pytest

from brainspeech.numerics import Tensor, grad_check
from brainspeech.objective import (
    CandidateSet,
    batch_negatives,
    clip_logits,
    clip_loss,
    clip_loss_batch,
    clip_loss_from_logits,
    clip_scores_eval,
    regression_loss,
    regression_scores_eval,
    softmax_rows,
)


def cross_entropy_oracle(logits, positive):
    """Direct softmax + negative log (no max subtraction)."""
    p = np.exp(logits) / np.exp(logits).sum()
    return -math.log(p[positive])


class TestClipLogits:
    def test_self_candidate_scores_squared_norm(self):
        z = np.zeros((2, 4))
        z[0, 0] = 2.0
        others = np.zeros((2, 2, 4))
        others[0, 1, 1] = 1.0  # orthogonal to z
        cands = CandidateSet(features=np.concatenate([z[None], others]), positive=0)
        scores = clip_logits(Tensor(z), cands).data
        assert scores[0] == pytest.approx((z**2).sum())
        assert scores[1] == pytest.approx(0.0)

    def test_identical_candidates_uniform(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(2, 5))
        cands = CandidateSet(features=np.stack([z] * 4), positive=2)
        probs = softmax_rows(clip_logits(Tensor(z), cands).data)
        np.testing.assert_allclose(probs, 0.25, atol=1e-7)

    def test_two_candidate_closed_form(self):
        # engineered scores (0, ln 3) -> probabilities (0.25, 0.75)
        probs = softmax_rows(np.array([0.0, math.log(3.0)]))
        np.testing.assert_allclose(probs, [0.25, 0.75], atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            clip_logits(Tensor(np.zeros((2, 3))), CandidateSet(np.zeros((2, 2, 4)), 0))


class TestClipLoss:
    def test_uniform_logits_log_n(self):
        for n in (2, 7, 31):
            loss = clip_loss_from_logits(Tensor(np.zeros(n)), 0).item()
            assert loss == pytest.approx(math.log(n), abs=1e-12)

    def test_saturated_positive_goes_to_zero(self):
        logits = np.zeros(5)
        logits[3] = 200.0
        assert clip_loss_from_logits(Tensor(logits), 3).item() < 1e-12

    def test_matches_cross_entropy_oracle(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=9)
        got = clip_loss_from_logits(Tensor(logits), 4).item()
        assert got == pytest.approx(cross_entropy_oracle(logits, 4), abs=1e-10)

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            logits = rng.normal(scale=5.0, size=rng.integers(2, 12))
            pos = int(rng.integers(logits.size))
            assert clip_loss_from_logits(Tensor(logits), pos).item() >= 0.0

    def test_non_finite_logits_rejected(self):
        with pytest.raises(ValueError):
            clip_loss_from_logits(Tensor(np.array([1.0, np.inf])), 0)

    def test_gradient_wrt_z_analytic_form(self):
        # d loss / d Z = sum_j p_j Y_j - Y_pos
        rng = np.random.default_rng(3)
        z_np = rng.normal(size=(3, 6))
        cands = CandidateSet(features=rng.normal(size=(5, 3, 6)), positive=2)
        z = Tensor(z_np, requires_grad=True)
        clip_loss(z, cands).backward()
        probs = softmax_rows(clip_scores_eval(z_np[None], cands.features)[0])
        want = np.einsum("j,jft->ft", probs, cands.features) - cands.features[2]
        np.testing.assert_allclose(z.grad, want, atol=1e-5)

    def test_grad_check_wrt_z(self):
        rng = np.random.default_rng(4)
        z = Tensor(rng.normal(size=(2, 5)))
        cands = CandidateSet(features=rng.normal(size=(4, 2, 5)), positive=1)
        assert grad_check(lambda z_: clip_loss(z_, cands), [z]) < 1e-4

    def test_batch_loss_grad_check_both_sides(self):
        rng = np.random.default_rng(5)
        z = Tensor(rng.normal(size=(3, 2, 4)))
        y = Tensor(rng.normal(size=(3, 2, 4)))
        assert grad_check(clip_loss_batch, [z, y]) < 1e-4

    def test_batch_matches_per_sample(self):
        rng = np.random.default_rng(6)
        z = rng.normal(size=(4, 2, 5))
        y = rng.normal(size=(4, 2, 5))
        batch = clip_loss_batch(Tensor(z), Tensor(y)).item()
        singles = [
            clip_loss(Tensor(z[i]), CandidateSet(features=y, positive=i)).item()
            for i in range(4)
        ]
        assert batch == pytest.approx(np.mean(singles), abs=1e-9)

    def test_batch_of_two_symmetric_binary(self):
        rng = np.random.default_rng(7)
        z = rng.normal(size=(2, 2, 3))
        y = rng.normal(size=(2, 2, 3))
        got = clip_loss_batch(Tensor(z), Tensor(y)).item()
        logits = clip_scores_eval(z, y)
        want = np.mean([cross_entropy_oracle(logits[i], i) for i in range(2)])
        assert got == pytest.approx(want, abs=1e-10)


class TestRegressionLoss:
    def test_perfect(self):
        x = np.random.default_rng(8).normal(size=(3, 4))
        assert regression_loss(Tensor(x), Tensor(x.copy())).item() == 0.0

    def test_offset_one(self):
        x = np.random.default_rng(9).normal(size=(3, 4))
        assert regression_loss(Tensor(x + 1), Tensor(x)).item() == pytest.approx(1.0)

    def test_regression_eval_ranks_by_distance(self):
        rng = np.random.default_rng(10)
        cands = rng.normal(size=(6, 2, 5))
        z = cands[3] + 0.01 * rng.normal(size=(2, 5))
        scores = regression_scores_eval(z[None], cands)[0]
        assert scores.argmax() == 3


class TestBatchNegatives:
    def test_candidate_sets_cover_batch(self):
        feats = np.random.default_rng(11).normal(size=(8, 2, 4))
        sets = batch_negatives(feats)
        assert len(sets) == 8
        for i, cs in enumerate(sets):
            assert cs.positive == i
            assert cs.n == 8
            assert cs.origin == "batch"

    def test_duplicates_kept(self):
        feats = np.zeros((4, 1, 2))
        sets = batch_negatives(feats)
        assert all(cs.n == 4 for cs in sets)

    def test_batch_of_one_rejected(self):
        with pytest.raises(ValueError):
            batch_negatives(np.zeros((1, 2, 3)))


def test_probability_rows_normalized():
    rng = np.random.default_rng(12)
    probs = softmax_rows(rng.normal(size=(20, 11)))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_shift_invariance_of_probabilities():
    rng = np.random.default_rng(13)
    logits = rng.normal(size=(5, 9))
    np.testing.assert_allclose(
        softmax_rows(logits), softmax_rows(logits + 123.4), atol=1e-7
    )
    assert np.array_equal(logits.argmax(1), (logits + 123.4).argmax(1))
