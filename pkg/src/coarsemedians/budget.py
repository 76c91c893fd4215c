"""Enumeration budgets.

Every exhaustive scan in the package is bounded by an explicit cap so that a
bad input fails loudly instead of hanging.  Scans of quintic or higher order
may fall back to seeded subsampling above ``exact_scan``; the results are then
labelled as lower bounds.  Quintic scans never subsample at or below 30 points.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Budget:
    """Caps for the enumeration kernels.

    tuple_candidates: largest candidate product enumerated when filtering a
        consistent tuple space.
    tuple_points: largest tuple space that will be materialised with a metric.
    table_points: largest space for which a dense ternary-operator table is built.
    exact_scan: largest number of evaluations an order-five-or-higher scan may
        perform exactly before switching to subsampling.
    rho_exact_points: largest space for which the empirical control of a
        ternary operator is computed over all pairs of triples.
    subsample: number of seeded random evaluations used in lower-bound mode.
    seed: seed for all subsampled scans.
    """

    tuple_candidates: int = 2_000_000
    tuple_points: int = 4_000
    table_points: int = 320
    exact_scan: int = 30**5
    rho_exact_points: int = 40
    subsample: int = 1_000_000
    seed: int = 7

    def with_cap(self, cap: int) -> "Budget":
        """Budget with the generic enumeration caps replaced by ``cap``."""
        return replace(self, tuple_candidates=cap, exact_scan=cap)

    def with_seed(self, seed: int) -> "Budget":
        return replace(self, seed=seed)


DEFAULT_BUDGET = Budget()

# A quintic scan below this point count must run exactly, whatever the budget.
EXACT_QUINTIC_POINTS = 30
