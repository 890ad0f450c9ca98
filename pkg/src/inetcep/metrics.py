"""Run metrics: event loss, accuracy against ground truth, latency summaries.

Loss is counted over events: of everything produced inside the
measurement window, how much never reached the consumer. Accuracy compares
delivered complex events against the reference results by (query, trigger
timestamp) with exact payload equality; F1 is reported on a 0..100 scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .cep import ComplexEvent


class InvalidCounts(ValueError):
    pass


class UndefinedF1(ValueError):
    pass


def loss_rate(total: int, processed: int) -> float:
    """(total - processed) / total; total must be positive, processed <= total."""
    if total <= 0:
        raise InvalidCounts(f"no events produced (total={total})")
    if processed < 0 or processed > total:
        raise InvalidCounts(f"processed={processed} outside [0, {total}]")
    return (total - processed) / total


@dataclass
class AccuracyCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def f1_percent(self) -> float:
        return f1_score(self.tp, self.fp, self.fn)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def f1_score(tp: int, fp: int, fn: int) -> float:
    """100 * 2tp / (2tp + fp + fn). Undefined when all three are zero."""
    denom = 2 * tp + fp + fn
    if denom == 0:
        raise UndefinedF1("no true positives, false positives or false negatives")
    return 100.0 * 2 * tp / denom


def compare_to_oracle(
    delivered: Sequence[ComplexEvent],
    truth: Sequence[ComplexEvent],
    slot_ts: Optional[Iterable[int]] = None,
) -> AccuracyCounts:
    """Match deliveries to ground truth by (qname, ts), payloads exactly.

    A matched pair with equal payload is a true positive; with a
    different payload it counts once as a false positive (a wrong event
    was derived) and once as a false negative (the right one was not). An
    unmatched delivery is a false positive, an unmatched truth event a
    false negative. ``slot_ts`` (the PREDICT emission boundaries) makes
    correct non-emissions countable: a slot neither side emitted in is a
    true negative.
    """
    counts = AccuracyCounts()
    truth_by_key: Dict[tuple, ComplexEvent] = {}
    for ce in truth:
        truth_by_key[(ce.qname, ce.ts)] = ce
    matched = set()
    delivered_keys = set()
    for ce in delivered:
        key = (ce.qname, ce.ts)
        ref = truth_by_key.get(key)
        if ref is None or key in matched:
            counts.fp += 1
            delivered_keys.add(key)
            continue
        matched.add(key)
        delivered_keys.add(key)
        if ref.payload_key() == ce.payload_key():
            counts.tp += 1
        else:
            counts.fp += 1
            counts.fn += 1
    counts.fn += len(truth_by_key) - len(matched)
    if slot_ts is not None:
        qnames = {ce.qname for ce in truth} | {ce.qname for ce in delivered} or {"q"}
        for q in qnames:
            for b in slot_ts:
                if (q, b) not in truth_by_key and (q, b) not in delivered_keys:
                    counts.tn += 1
    return counts


def latency_summary(samples_us: Sequence[int]) -> dict:
    """Count, mean and tail percentiles, all in microseconds."""
    if len(samples_us) == 0:
        return {"count": 0}
    arr = np.asarray(samples_us, dtype=np.int64)
    return {
        "count": int(arr.size),
        "mean": float(arr.mean()),
        "min": int(arr.min()),
        "max": int(arr.max()),
        "p50": float(np.percentile(arr, 50)),
        "p90": float(np.percentile(arr, 90)),
        "p95": float(np.percentile(arr, 95)),
        "p99": float(np.percentile(arr, 99)),
    }
