"""Metric correctness against a brute-force per-pixel oracle."""

import math

import numpy as np
import pytest

from swinseg import metrics as M


# ---------------------------------------------------------------------------
# pure-python double-loop oracle (independent of the vectorized path)

def oracle_confusion(pred, target):
    tp = fp = fn = tn = 0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            p, t = bool(pred[i, j]), bool(target[i, j])
            if p and t:
                tp += 1
            elif p and not t:
                fp += 1
            elif not p and t:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def oracle_region(tp, fp, fn, tn):
    if tp + fp + fn == 0:
        dsc, iou = 1.0, 1.0
    else:
        dsc = 2 * tp / (2 * tp + fp + fn)
        iou = tp / (tp + fp + fn)
    acc = (tp + tn) / (tp + fp + fn + tn)
    return dsc, acc, iou


def oracle_boundary(mask):
    h, w = mask.shape
    out = np.zeros((h, w), dtype=bool)
    for i in range(h):
        for j in range(w):
            if not mask[i, j]:
                continue
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ni, nj = i + di, j + dj
                if ni < 0 or nj < 0 or ni >= h or nj >= w or not mask[ni, nj]:
                    out[i, j] = True
                    break
    return out


def oracle_bf(pred, target, tol):
    pb = [(i, j) for i in range(pred.shape[0]) for j in range(pred.shape[1]) if oracle_boundary(pred)[i, j]]
    tb = [(i, j) for i in range(target.shape[0]) for j in range(target.shape[1]) if oracle_boundary(target)[i, j]]
    if not pb and not tb:
        return 1.0
    if not pb or not tb:
        return 0.0

    def near(p, pts):
        return any(math.hypot(p[0] - q[0], p[1] - q[1]) <= tol for q in pts)

    precision = sum(near(p, tb) for p in pb) / len(pb)
    recall = sum(near(t, pb) for t in tb) / len(tb)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


class TestConfusion:
    def test_perfect_prediction(self):
        t = np.zeros((4, 4), dtype=int)
        t[1:3, 1:3] = 1
        cc = M.confusion(t, t)
        assert (cc.tp, cc.fp, cc.fn, cc.tn) == (4, 0, 0, 12)

    def test_inverted_prediction(self):
        t = np.zeros((3, 3), dtype=int)
        t[0] = 1
        cc = M.confusion(1 - t, t)
        assert cc.tp == 0 and cc.tn == 0
        assert cc.fp == 6 and cc.fn == 3

    def test_hand_case(self):
        pred = np.array([[1, 1, 0, 0]])
        target = np.array([[1, 0, 1, 0]])
        cc = M.confusion(pred, target)
        assert (cc.tp, cc.fp, cc.fn, cc.tn) == (1, 1, 1, 1)

    def test_non_binary_rejected(self):
        with pytest.raises(M.MetricsError, match="binary"):
            M.confusion(np.array([[0.5]]), np.array([[1]]))

    def test_matches_oracle_on_random_masks(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = (rng.uniform(0, 1, (8, 8)) > 0.6).astype(int)
            t = (rng.uniform(0, 1, (8, 8)) > 0.6).astype(int)
            cc = M.confusion(p, t)
            assert (cc.tp, cc.fp, cc.fn, cc.tn) == oracle_confusion(p, t)


class TestRegionMetrics:
    def test_hand_case(self):
        dsc, acc, iou = M.region_metrics(M.ConfusionCounts(1, 1, 1, 1))
        assert dsc == 0.5 and acc == 0.5 and abs(iou - 1 / 3) < 1e-12

    def test_perfect_case(self):
        dsc, acc, iou = M.region_metrics(M.ConfusionCounts(5, 0, 0, 11))
        assert dsc == acc == iou == 1.0

    def test_all_zero_rejected(self):
        with pytest.raises(M.MetricsError, match="zero"):
            M.region_metrics(M.ConfusionCounts(0, 0, 0, 0))

    def test_identity_iou_dsc(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            tp, fp, fn, tn = rng.integers(0, 30, 4)
            if tp + fp + fn + tn == 0:
                continue
            dsc, _, iou = M.region_metrics(M.ConfusionCounts(int(tp), int(fp), int(fn), int(tn)))
            assert abs(iou - dsc / (2.0 - dsc)) < 1e-12
            assert iou <= dsc + 1e-12


class TestBfScore:
    def test_identical_masks(self):
        m = np.zeros((16, 16), dtype=int)
        m[4:10, 5:12] = 1
        assert M.bf_score(m, m) == 1.0

    def test_one_pixel_shift_within_tolerance(self):
        a = np.zeros((16, 16), dtype=int)
        b = np.zeros((16, 16), dtype=int)
        a[4:10, 4:10] = 1
        b[5:11, 4:10] = 1  # shifted down by one pixel
        assert M.bf_score(a, b, tolerance=1.5) == 1.0

    def test_far_apart_boundaries(self):
        a = np.zeros((32, 32), dtype=int)
        b = np.zeros((32, 32), dtype=int)
        a[1:4, 1:4] = 1
        b[28:31, 28:31] = 1
        assert M.bf_score(a, b, tolerance=1.0) == 0.0

    def test_both_empty(self):
        z = np.zeros((8, 8), dtype=int)
        assert M.bf_score(z, z) == 1.0

    def test_one_sided_empty(self):
        z = np.zeros((8, 8), dtype=int)
        m = z.copy()
        m[2:5, 2:5] = 1
        assert M.bf_score(z, m) == 0.0
        assert M.bf_score(m, z) == 0.0

    def test_default_tolerance_rounds_up(self):
        assert M.default_bf_tolerance(256, 256) == math.ceil(0.0075 * math.hypot(256, 256))
        assert M.default_bf_tolerance(8, 8) == 1.0

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            p = (rng.uniform(0, 1, (8, 8)) > 0.5).astype(int)
            t = (rng.uniform(0, 1, (8, 8)) > 0.5).astype(int)
            got = M.bf_score(p, t, tolerance=1.0)
            want = oracle_bf(p, t, 1.0)
            assert abs(got - want) < 1e-12

    def test_boundary_matches_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            m = (rng.uniform(0, 1, (8, 8)) > 0.5)
            np.testing.assert_array_equal(M.boundary_pixels(m), oracle_boundary(m))


class TestAggregate:
    def test_single_full_region(self):
        # prediction == target == everything lesion
        ones = np.ones((4, 4), dtype=int)
        report = M.aggregate([M.evaluate_pair(ones, ones)])
        assert report.global_acc == report.lesion.accuracy == 1.0

    def test_equal_shares_weighted_equals_mean(self):
        p = np.zeros((4, 4), dtype=int)
        t = np.zeros((4, 4), dtype=int)
        t[:2] = 1  # half the pixels lesion
        p[:2] = 1
        p[0, 0] = 0
        p[3, 3] = 1
        report = M.aggregate([M.evaluate_pair(p, t)])
        assert abs(report.weighted_iou - report.mean_iou) < 1e-12

    def test_image_order_invariance(self):
        rng = np.random.default_rng(4)
        evals = []
        for _ in range(6):
            p = (rng.uniform(0, 1, (8, 8)) > 0.5).astype(int)
            t = (rng.uniform(0, 1, (8, 8)) > 0.5).astype(int)
            evals.append(M.evaluate_pair(p, t))
        a = M.aggregate(evals)
        b = M.aggregate(list(reversed(evals)))
        assert a.global_acc == b.global_acc
        assert a.lesion.dsc == b.lesion.dsc

    def test_two_image_corpus_matches_bruteforce(self):
        p1 = np.array([[1, 1, 0, 0]] * 4)
        t1 = np.array([[1, 0, 1, 0]] * 4)
        p2 = np.eye(4, dtype=int)
        t2 = np.eye(4, dtype=int)
        report = M.aggregate([M.evaluate_pair(p1, t1), M.evaluate_pair(p2, t2)])
        tp, fp, fn, tn = (a + b for a, b in zip(oracle_confusion(p1, t1), oracle_confusion(p2, t2)))
        dsc, acc, iou = oracle_region(tp, fp, fn, tn)
        assert abs(report.lesion.dsc - dsc) < 1e-12
        assert abs(report.lesion.iou - iou) < 1e-12
        assert abs(report.global_acc - (tp + tn) / 32) < 1e-12

    def test_random_masks_match_oracle(self):
        rng = np.random.default_rng(5)
        evals = []
        counts = [0, 0, 0, 0]
        for _ in range(20):
            p = (rng.uniform(0, 1, (8, 8)) > 0.55).astype(int)
            t = (rng.uniform(0, 1, (8, 8)) > 0.55).astype(int)
            evals.append(M.evaluate_pair(p, t))
            for k, v in enumerate(oracle_confusion(p, t)):
                counts[k] += v
        report = M.aggregate(evals)
        tp, fp, fn, tn = counts
        dsc_l, acc_l, iou_l = oracle_region(tp, fp, fn, tn)
        dsc_b, acc_b, iou_b = oracle_region(tn, fn, fp, tp)
        total = sum(counts)
        assert abs(report.lesion.dsc - dsc_l) < 1e-12
        assert abs(report.background.dsc - dsc_b) < 1e-12
        assert abs(report.mean_iou - (iou_l + iou_b) / 2) < 1e-12
        share_l = (tp + fn) / total
        share_b = (tn + fp) / total
        assert abs(report.weighted_iou - (share_l * iou_l + share_b * iou_b)) < 1e-12
        recall_l = tp / (tp + fn) if tp + fn else 1.0
        recall_b = tn / (tn + fp) if tn + fp else 1.0
        assert abs(report.mean_acc - (recall_l + recall_b) / 2) < 1e-12


class TestSerialization:
    def _report(self):
        p = np.array([[1, 1, 0, 0]] * 4)
        t = np.array([[1, 0, 1, 0]] * 4)
        return M.aggregate([M.evaluate_pair(p, t)])

    def test_csv_header_exact(self):
        csv = M.report_csv(self._report())
        assert csv.splitlines()[0] == "region,dsc,accuracy,iou,bf_score"
        assert csv.splitlines()[1].startswith("lesion,")
        assert csv.splitlines()[2].startswith("background,")

    def test_aggregates_csv_columns(self):
        csv = M.aggregates_csv(self._report())
        assert csv.splitlines()[0] == "global_acc,mean_acc,mean_iou,weighted_iou,mean_bf"

    def test_confusion_rows_normalized(self):
        csv = M.confusion_csv(self._report()).splitlines()
        lesion = [float(x) for x in csv[1].split(",")[1:]]
        background = [float(x) for x in csv[2].split(",")[1:]]
        assert abs(sum(lesion) - 1.0) < 1e-5
        assert abs(sum(background) - 1.0) < 1e-5

    def test_json_roundtrip(self):
        import json

        d = json.loads(M.report_json(self._report()))
        assert set(d["aggregates"]) == {"global_acc", "mean_acc", "mean_iou", "weighted_iou", "mean_bf"}
        assert set(d["regions"]) == {"lesion", "background"}
