"""Independent oracles: deliberately naive reimplementations used to
cross-check the package's cleverer code paths."""

from __future__ import annotations

from fractions import Fraction
from typing import Optional, Sequence


def per_second_cost(
    entries: Sequence[tuple[Fraction, Fraction, Fraction]],
) -> Fraction:
    """Brute-force ledger integration: walk every whole second of every
    entry and accumulate price/3600, plus the fractional tail ends.

    Entries are (unit_price_hour, open_time, close_time) with exact times.
    """
    total = Fraction(0)
    for price, open_time, close_time in entries:
        per_second = price / 3600
        t = open_time
        # partial first second up to the next integer boundary
        first_boundary = Fraction(int(open_time)) + (0 if open_time == int(open_time) else 1)
        if first_boundary > close_time:
            total += per_second * (close_time - open_time)
            continue
        total += per_second * (first_boundary - open_time)
        t = first_boundary
        while t + 1 <= close_time:
            total += per_second
            t += 1
        total += per_second * (close_time - t)
    return total


def residue_walk(
    durations: Sequence[Fraction], window: Fraction
) -> tuple[Fraction, list[Fraction]]:
    """Walk the poll grid tick by tick (no closed-form ceil), returning the
    polled total duration and the per-stage alignment residues."""
    window = Fraction(window)
    elapsed = Fraction(0)  # time since submission, always on a tick
    residues = []
    for duration in durations:
        target = elapsed + Fraction(duration)
        tick = elapsed
        while tick < target:
            tick += window
        residues.append(tick - target)
        elapsed = tick
    return elapsed, residues


def query_scan(
    rows: Sequence[dict], filters: dict
) -> list[dict]:
    """Linear-scan equality filter ordered by submit time then id."""
    kept = [
        row
        for row in rows
        if all(row.get(key) == value for key, value in filters.items())
    ]
    return sorted(
        kept,
        key=lambda r: (Fraction(r.get("submitted_at", "0")), r.get("execution_id", "")),
    )


def reachable_pairs(groups) -> set[tuple[str, str, str]]:
    """Every (protocol, source_group, peer) combination some ingress rule
    permits, enumerated over all ports by brute force on rule bounds."""
    pairs = set()
    for group in groups:
        for rule in group.rules:
            if rule.direction != "ingress":
                continue
            pairs.add((rule.protocol, group.group_id, rule.peer))
    return pairs


def student_t_reference(sample_a: Sequence[float], sample_b: Sequence[float]):
    """Reference t statistic and two-sided p-value from scipy."""
    from scipy import stats

    result = stats.ttest_ind(list(sample_a), list(sample_b), equal_var=True)
    return float(result.statistic), float(result.pvalue)
