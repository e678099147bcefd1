"""Detection and clustering metrics: F1, ROC/AUC, NMI, ARI, Hungarian accuracy."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from math import comb, log
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata


class MetricError(Exception):
    pass


def _check_lengths(a, b):
    if len(a) != len(b):
        raise MetricError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise MetricError("empty input")


def _ordered_unique(seq) -> list:
    return list(dict.fromkeys(seq))


def f1_scores(gold, pred) -> tuple[float, float]:
    """(macro, micro) F1 over the classes present in gold or pred.

    Zero is substituted wherever a precision/recall/F1 denominator is zero.
    """
    _check_lengths(gold, pred)
    classes = _ordered_unique(list(gold) + list(pred))
    tp_total = fp_total = fn_total = 0
    f1s = []
    for c in classes:
        tp = sum(1 for g, p in zip(gold, pred) if g == c and p == c)
        fp = sum(1 for g, p in zip(gold, pred) if g != c and p == c)
        fn = sum(1 for g, p in zip(gold, pred) if g == c and p != c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
        tp_total += tp
        fp_total += fp
        fn_total += fn
    macro = float(np.mean(f1s))
    micro_p = tp_total / (tp_total + fp_total) if tp_total + fp_total else 0.0
    micro_r = tp_total / (tp_total + fn_total) if tp_total + fn_total else 0.0
    micro = 2 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r else 0.0
    return macro, micro


def roc_auc(scores, is_positive) -> tuple[float, list[tuple[float, float, float]]]:
    """AUC as the rank statistic (ties count 1/2); higher score = more positive.

    roc_points holds (threshold, fpr, tpr) at every distinct score plus the
    (0,0) and (1,1) sentinels, using the strict score > threshold rule.
    """
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(is_positive, dtype=bool)
    _check_lengths(scores, pos)
    n_pos = int(pos.sum())
    n_neg = int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("roc_auc needs at least one positive and one negative")
    ranks = rankdata(scores, method="average")
    auc = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)
    points = [(np.inf, 0.0, 0.0)]
    for thr in np.unique(scores)[::-1]:
        fpr = float((scores[~pos] > thr).sum() / n_neg)
        tpr = float((scores[pos] > thr).sum() / n_pos)
        points.append((float(thr), fpr, tpr))
    points.append((-np.inf, 1.0, 1.0))
    return float(auc), points


def _contingency(gold, pred):
    gold_ids = _ordered_unique(gold)
    pred_ids = _ordered_unique(pred)
    gi = {g: i for i, g in enumerate(gold_ids)}
    pi = {p: i for i, p in enumerate(pred_ids)}
    table = np.zeros((len(gold_ids), len(pred_ids)), dtype=np.int64)
    for g, p in zip(gold, pred):
        table[gi[g], pi[p]] += 1
    return table, gold_ids, pred_ids


def nmi(gold, pred) -> float:
    """Mutual information normalized by the arithmetic mean of entropies."""
    _check_lengths(gold, pred)
    table, gold_ids, pred_ids = _contingency(gold, pred)
    if len(gold_ids) == 1 and len(pred_ids) == 1:
        return 1.0
    n = table.sum()
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    h_gold = -sum((ai / n) * log(ai / n) for ai in a if ai)
    h_pred = -sum((bj / n) * log(bj / n) for bj in b if bj)
    if h_gold == 0.0 or h_pred == 0.0:
        return 0.0
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            nij = table[i, j]
            if nij:
                mi += (nij / n) * log(n * nij / (a[i] * b[j]))
    return float(min(1.0, max(0.0, mi / ((h_gold + h_pred) / 2))))


def ari(gold, pred) -> float:
    """Adjusted Rand index by pair counting with expected-index correction."""
    _check_lengths(gold, pred)
    if len(gold) < 2:
        raise MetricError("ari needs n >= 2")
    table, _, _ = _contingency(gold, pred)
    n = int(table.sum())
    index = sum(comb(int(nij), 2) for nij in table.ravel())
    sum_a = sum(comb(int(ai), 2) for ai in table.sum(axis=1))
    sum_b = sum(comb(int(bj), 2) for bj in table.sum(axis=0))
    expected = sum_a * sum_b / comb(n, 2)
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def clustering_accuracy(gold, pred) -> tuple[float, dict]:
    """Best one-to-one cluster-to-label mapping (Hungarian); noise is an error.

    pred may contain -1 for noise; noise rows never match. Returns
    (matched/n, mapping from real predicted ids to gold labels).
    """
    _check_lengths(gold, pred)
    n = len(gold)
    keep = [i for i, p in enumerate(pred) if p != -1]
    gold_ids = _ordered_unique(gold)
    pred_ids = _ordered_unique(pred[i] for i in keep)
    if not pred_ids:
        return 0.0, {}
    gi = {g: i for i, g in enumerate(gold_ids)}
    pi = {p: i for i, p in enumerate(pred_ids)}
    side = max(len(gold_ids), len(pred_ids))
    table = np.zeros((side, side), dtype=np.int64)
    for i in keep:
        table[pi[pred[i]], gi[gold[i]]] += 1
    rows, cols = linear_sum_assignment(-table)
    matched = int(table[rows, cols].sum())
    mapping = {
        pred_ids[r]: gold_ids[c]
        for r, c in zip(rows, cols)
        if r < len(pred_ids) and c < len(gold_ids) and table[r, c] > 0
    }
    return matched / n, mapping


def k_report(pred, gold) -> tuple[int, int]:
    """(k, k_star): distinct non-noise predicted ids vs distinct gold ids."""
    _check_lengths(pred, gold)
    k = len({p for p in pred if p != -1})
    k_star = len(set(gold))
    return k, k_star


@dataclass(frozen=True)
class EvalReport:
    macro_f1: float
    micro_f1: float
    macro_f1_mc: float
    micro_f1_mc: float
    auc: float
    roc_points: tuple[tuple[float, float, float], ...]
    nmi: float
    ari: float
    acc: float
    k_discovered: int
    k_star: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roc_points"] = [list(p) for p in self.roc_points]
        return d


def write_report(path: str | Path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")


def write_roc(path: str | Path, roc_points) -> None:
    """CSV dump: threshold,fpr,tpr."""
    lines = ["threshold,fpr,tpr"]
    for thr, fpr, tpr in roc_points:
        lines.append(f"{thr:.9g},{fpr:.9g},{tpr:.9g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
