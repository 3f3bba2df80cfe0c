"""Per-category corpus statistics."""

from __future__ import annotations

CATEGORIES = ("parallel", "reduction", "private", "simd", "target", "non_parallel")
COLUMNS = ("loops", "function_call", "nested", "avg_loc")


def _in(category: str, labels) -> bool:
    if category == "non_parallel":
        return not labels.parallel
    return labels.get(category)


def corpus_stats(loops) -> dict:
    """Loop count, loops with calls, nested loops and mean LOC per label category."""
    table = {}
    for cat in CATEGORIES:
        members = [lp for lp in loops if _in(cat, lp.labels)]
        n = len(members)
        table[cat] = {
            "loops": n,
            "function_call": sum(lp.has_function_call for lp in members),
            "nested": sum(lp.is_nested for lp in members),
            "avg_loc": round(sum(lp.loc for lp in members) / n, 2) if n else 0.0,
        }
    return table


def stats_rows(table: dict) -> list:
    return [[cat] + [f"{table[cat]['avg_loc']:.2f}" if c == "avg_loc" else table[cat][c] for c in COLUMNS]
            for cat in CATEGORIES]
