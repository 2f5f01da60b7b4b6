"""Centrality-proportional desired-rate allocation.

Given the receiver's best link-capacity estimate, each flow's least rate and
the popularity profile, assign every flow a desired rate. When the capacity
covers all least rates, each flow gets its least rate plus a centrality share
of the residual; otherwise the capacity itself is split by centrality share.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

from .social import PopularityProfile


@dataclass(frozen=True)
class RateAllocation:
    desired: Mapping       # flow -> bits/s
    least: Mapping         # flow -> bits/s
    shares: Mapping        # flow -> normalised centrality share
    order: tuple           # flows by decreasing popularity
    link_capacity: float
    floor_branch: bool     # True when every flow got its least rate first

    def total(self) -> float:
        return sum(self.desired.values())


def compute_desired_rates(
    l_c: float, least: Mapping, profile: PopularityProfile
) -> RateAllocation:
    if not l_c > 0.0:
        raise ValueError(f"link capacity must be positive, got {l_c}")
    order = profile.rank
    if set(least) != set(order):
        raise ValueError("least rates and popularity profile cover different flows")
    if any(least[f] < 0.0 for f in order):
        raise ValueError("least rates must be non-negative")
    shares = profile.shares()
    least_sum = sum(least[f] for f in order)
    desired = {}
    if l_c >= least_sum:
        residual = l_c - least_sum
        for f in order:
            desired[f] = shares[f] * residual + least[f]
    else:
        for f in order:
            desired[f] = l_c * shares[f]
    # rounding residue goes to the most popular flow
    desired[order[0]] += l_c - sum(desired[f] for f in order)
    return RateAllocation(
        desired=desired,
        least=dict(least),
        shares=shares,
        order=order,
        link_capacity=l_c,
        floor_branch=l_c >= least_sum,
    )


def recompute_with_cap(
    alloc: RateAllocation, capped_flow, cap: float, frozen: frozenset = frozenset()
) -> RateAllocation:
    """Cap one flow and hand its unused share to the others.

    The freed amount is split over the flows not in ``frozen`` (and not the
    capped flow itself) in proportion to their shares, falling back to an
    equal split when those shares are all zero. With nobody left to absorb the
    freed rate the allocation is returned unchanged.
    """
    current = alloc.desired[capped_flow]
    new_value = min(cap, current)
    freed = current - new_value
    takers = [f for f in alloc.order if f != capped_flow and f not in frozen]
    if freed <= 0.0 or not takers:
        return alloc
    before = alloc.total()
    weight = sum(alloc.shares[f] for f in takers)
    desired = dict(alloc.desired)
    desired[capped_flow] = new_value
    for f in takers:
        part = alloc.shares[f] / weight if weight > 0.0 else 1.0 / len(takers)
        desired[f] += freed * part
    desired[takers[0]] += before - sum(desired.values())
    return replace(alloc, desired=desired)
