from __future__ import annotations

import numpy as np
import pytest

from bronchotrack.geometry import make_pose
from bronchotrack.metrics import (FrameRecord, GenerationScore, SequenceResult, aggregate,
                                  f1_by_generation, precision_recall, sequence_result,
                                  tracking_summary)

POSE = make_pose([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])


def rec(true_vis, est_vis, gen=1, bif_correct=False, est_pose=None, t=0.0,
        true_pose=POSE):
    if bif_correct and est_pose is None:
        est_pose = true_pose
    return FrameRecord(t=t, true_visible=set(true_vis), est_visible=set(est_vis),
                       true_pose=true_pose, est_pose=est_pose, bif_correct=bif_correct,
                       true_generation=gen)


def test_perfect_estimates():
    records = [rec({1, 2, 3}, {1, 2, 3}), rec({4}, {4})]
    assert precision_recall(records) == (1.0, 1.0, 1.0)


def test_hand_computed_case():
    p, r, f1 = precision_recall([rec({1, 2}, {1})])
    assert p == 1.0
    assert r == 0.5
    assert abs(f1 - 2.0 / 3.0) < 1e-12


def test_precision_recall_matches_confusion_oracle():
    rng = np.random.default_rng(41)
    universe = list(range(20))
    records = []
    for _ in range(200):
        a = {u for u in universe if rng.random() < 0.3}
        b = {u for u in universe if rng.random() < 0.3}
        records.append(rec(a, b))
    # element-level confusion-matrix oracle
    tp = fn = fp = 0
    for r_ in records:
        for u in universe:
            in_a, in_b = u in r_.true_visible, u in r_.est_visible
            tp += in_a and in_b
            fn += in_a and not in_b
            fp += in_b and not in_a
    p, r, f1 = precision_recall(records)
    exp_p = tp / (tp + fp)
    exp_r = tp / (tp + fn)
    assert abs(p - exp_p) < 1e-12
    assert abs(r - exp_r) < 1e-12
    assert abs(f1 - 2 * exp_p * exp_r / (exp_p + exp_r)) < 1e-12


def test_precision_recall_empty_bin_absent():
    assert precision_recall([rec(set(), set())]) == (None, None, None)


def test_f1_zero_when_disjoint():
    p, r, f1 = precision_recall([rec({1}, {2})])
    assert (p, r, f1) == (0.0, 0.0, 0.0)


def test_precision_recall_requires_records():
    with pytest.raises(ValueError):
        precision_recall([])


def test_f1_by_generation_keys():
    records = [rec({1}, {1}, gen=0), rec({1}, {1}, gen=1), rec({2}, {2}, gen=1)]
    scores = f1_by_generation(records)
    assert sorted(scores) == [0, 1]
    assert scores[1].frame_count == 2


def test_f1_by_generation_perfect():
    records = [rec({1, 2}, {1, 2}, gen=g) for g in (1, 2, 3)]
    scores = f1_by_generation(records)
    assert all(s.f1 == 1.0 for s in scores.values())


def test_f1_by_generation_errors_localized():
    records = []
    for g in (1, 2):
        records += [rec({1, 2}, {1, 2}, gen=g)] * 5
    records += [rec({1, 2}, {1, 9}, gen=3)] * 5
    scores = f1_by_generation(records)
    assert scores[1].f1 == 1.0 and scores[2].f1 == 1.0
    assert scores[3].f1 < 1.0


def test_tracking_summary_exact():
    records = [rec({1}, {1}, bif_correct=True) for _ in range(3)]
    e_p, e_d, e_r, n = tracking_summary(records)
    assert (e_p, e_d, e_r, n) == (0.0, 0.0, 0.0, 3)


def test_tracking_summary_single_offset():
    true_pose = make_pose([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])
    est_pose = make_pose([5.0, 0.0, 0.0], [0.0, 0.0, 1.0])
    records = [FrameRecord(t=0.0, true_visible={1}, est_visible={1}, true_pose=true_pose,
                           est_pose=est_pose, bif_correct=True, true_generation=1),
               rec({1}, {1}, bif_correct=False)]   # non-qualifying frame is excluded
    e_p, e_d, e_r, n = tracking_summary(records)
    assert e_p == 5.0 and n == 1


def test_tracking_summary_matches_recompute_oracle():
    from bronchotrack.geometry import tracking_errors

    rng = np.random.default_rng(42)
    records = []
    for i in range(40):
        tp = make_pose(rng.normal(0, 20, 3), _unit(rng), rng.uniform(-90, 90))
        ep = make_pose(rng.normal(0, 20, 3), _unit(rng), rng.uniform(-90, 90))
        records.append(FrameRecord(t=float(i), true_visible={1}, est_visible={1},
                                   true_pose=tp, est_pose=ep,
                                   bif_correct=bool(rng.random() < 0.6), true_generation=1))
    e_p, e_d, e_r, n = tracking_summary(records)
    qual = [r for r in records if r.bif_correct]
    assert n == len(qual)
    exp = [tracking_errors(r.true_pose, r.est_pose) for r in qual]
    assert abs(e_p - sum(e.e_p for e in exp) / n) < 1e-12
    assert abs(e_d - sum(e.e_d for e in exp) / n) < 1e-12
    assert abs(e_r - sum(e.e_r for e in exp) / n) < 1e-12


def _unit(rng):
    v = rng.normal(0, 1, 3)
    return v / np.linalg.norm(v)


def test_tracking_summary_absent_when_empty():
    assert tracking_summary([rec({1}, {1})]) == (None, None, None, 0)


def test_bif_correct_requires_pose():
    with pytest.raises(ValueError):
        FrameRecord(t=0.0, true_visible=set(), est_visible=set(), true_pose=POSE,
                    est_pose=None, bif_correct=True, true_generation=0)


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def _seq(f1_by_gen: dict[int, tuple[float, int]], e_p=None, n_track=0,
         frames=100) -> SequenceResult:
    per_gen = {g: GenerationScore(precision=f1, recall=f1, f1=f1, frame_count=n)
               for g, (f1, n) in f1_by_gen.items()}
    return SequenceResult(per_generation=per_gen, mean_e_p=e_p, mean_e_d=e_p,
                          mean_e_r=e_p, n_tracking_frames=n_track, frame_count=frames)


def test_aggregate_single_sequence_is_identity():
    s = _seq({1: (0.8, 50), 2: (0.6, 30)}, e_p=4.0, n_track=20)
    agg = aggregate([s])
    assert agg.per_generation[1].mean == 0.8
    assert agg.per_generation[2].mean == 0.6
    assert agg.e_p.mean == 4.0


def test_aggregate_weighted_hand_case():
    a = _seq({1: (1.0, 100)}, frames=100)
    b = _seq({1: (0.5, 50)}, frames=50)
    agg = aggregate([a, b])
    assert abs(agg.per_generation[1].mean - 5.0 / 6.0) < 1e-12
    assert agg.per_generation[1].min == 0.5
    assert agg.per_generation[1].max == 1.0


def test_aggregate_matches_brute_force_oracle():
    rng = np.random.default_rng(43)
    seqs = []
    for _ in range(20):
        gens = {g: (float(rng.uniform(0, 1)), int(rng.integers(1, 200)))
                for g in range(1, 1 + rng.integers(1, 5))}
        seqs.append(_seq(gens, e_p=float(rng.uniform(0, 10)),
                         n_track=int(rng.integers(1, 50))))
    agg = aggregate(seqs)
    for g, m in agg.per_generation.items():
        num = sum(s.per_generation[g].f1 * s.per_generation[g].frame_count
                  for s in seqs if g in s.per_generation)
        den = sum(s.per_generation[g].frame_count for s in seqs if g in s.per_generation)
        assert abs(m.mean - num / den) < 1e-12
    num = sum(s.mean_e_p * s.n_tracking_frames for s in seqs)
    den = sum(s.n_tracking_frames for s in seqs)
    assert abs(agg.e_p.mean - num / den) < 1e-12


def test_adding_perfect_frame_never_decreases_micro_scores():
    rng = np.random.default_rng(44)
    records = [rec({1, 2, 3}, {2, 3, 4}), rec({1}, {2}), rec({5, 6}, {5})]
    p0, r0, _ = precision_recall(records)
    for _ in range(20):
        extra = {int(v) for v in rng.integers(0, 9, 3)}
        p1, r1, _ = precision_recall(records + [rec(extra, set(extra))])
        assert p1 >= p0 - 1e-12
        assert r1 >= r0 - 1e-12


def test_f1_bounded_and_permutation_invariant():
    rng = np.random.default_rng(45)
    records = [rec({int(v) for v in rng.integers(0, 8, 3)},
                   {int(v) for v in rng.integers(0, 8, 3)}) for _ in range(30)]
    p, r, f1 = precision_recall(records)
    assert 0.0 <= f1 <= 1.0
    shuffled = list(records)
    rng.shuffle(shuffled)
    assert precision_recall(shuffled) == (p, r, f1)


def test_sequence_result_f1_consistency():
    records = [rec({1, 2}, {1}, gen=1)] * 4
    res = sequence_result(records, loop_hz=500.0)
    score = res.per_generation[1]
    expected_f1 = 2 * score.precision * score.recall / (score.precision + score.recall)
    assert abs(score.f1 - expected_f1) < 1e-12
    assert res.frame_count == 4
    assert res.loop_hz == 500.0
