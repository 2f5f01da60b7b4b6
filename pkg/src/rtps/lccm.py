"""Link capacity tracking at the receiver.

Aggregates per-flow rate estimates into the consumable link rate, keeps the
best desired link capacity, detects contention on single flows and on the
whole link, and periodically resets itself to the configured capacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

from . import drcm
from .errors import ConfigError
from .social import PopularityProfile


@dataclass
class LinkCapacityState:
    initial_capacity: float
    epsilon: float = 0.7
    epoch_length: float = 1.0
    reinit_period: float = 100.0
    c: float = 0.0
    c_prev: float = 0.0
    me: float = 0.0
    link_capacity: float = 0.0
    # capacity before single-flow contention reductions
    base_capacity: float = 0.0
    contended: dict = field(default_factory=dict)
    caps: dict = field(default_factory=dict)
    # capacity at which contention last settled; growth above it goes to the top flow
    growth_base: Optional[float] = None
    last_reinit: float = 0.0
    full_link: bool = False

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.initial_capacity > 0.0:
            raise ConfigError("initial capacity must be positive")
        if not self.epoch_length > 0.0 or not self.reinit_period > 0.0:
            raise ConfigError("epoch length and re-initialisation period must be positive")
        if self.link_capacity <= 0.0:
            self.link_capacity = self.initial_capacity
        if self.base_capacity <= 0.0:
            self.base_capacity = self.link_capacity


def update_consumable(state: LinkCapacityState, rates) -> LinkCapacityState:
    """Sum the flow rates into ``c`` and fold the previous ``c`` into ``me``."""
    state.c = math.fsum(rates)
    if state.c_prev > state.me:
        state.me = state.c_prev
    return state


def commit_consumable(state: LinkCapacityState) -> LinkCapacityState:
    state.c_prev = state.c
    return state


def detect_flow_contention(rate: float, desired: float, epsilon: float) -> bool:
    """A flow is contended while its rate stays strictly below ``epsilon * desired``."""
    return rate < epsilon * desired


def reinitialise(state: LinkCapacityState, now: float) -> LinkCapacityState:
    state.link_capacity = state.initial_capacity
    state.base_capacity = state.initial_capacity
    state.me = 0.0
    state.contended.clear()
    state.caps.clear()
    state.growth_base = None
    state.full_link = False
    state.last_reinit = now
    return state


def update_link_capacity(
    state: LinkCapacityState,
    epoch_rates: Mapping,
    desired: Mapping,
    now: float,
    quantum: float,
    uncapped_desired: Optional[Mapping] = None,
) -> LinkCapacityState:
    """Epoch-boundary capacity update.

    A flow is contended when its epoch rate falls below ``epsilon`` times the
    desired rate it was last given (its cap, if it was capped); the contention
    settles, and the cap is lifted, once it reaches that fraction again.

    Args:
        epoch_rates: flow -> mean arrival rate over the epoch just ended.
        desired: flow -> desired rate in force during the epoch.
        now: simulated time of the boundary.
        quantum: additive-increase step in bits/s.
        uncapped_desired: flow -> desired rate before contention caps; sizes
            the capacity reduction for a contended flow. Defaults to ``desired``.
    """
    if uncapped_desired is None:
        uncapped_desired = desired
    if now - state.last_reinit >= state.reinit_period - 1e-9:
        return reinitialise(state, now)
    flows = [f for f in epoch_rates if f in desired]
    total = math.fsum(epoch_rates[f] for f in flows)
    state.contended = {
        f: detect_flow_contention(epoch_rates[f], desired[f], state.epsilon)
        for f in flows
    }
    n_contended = sum(state.contended.values())
    state.caps = {}
    state.full_link = False
    if flows and n_contended >= math.ceil(len(flows) / 2):
        state.full_link = True
        state.growth_base = None
        state.base_capacity = min(state.initial_capacity, max(total, quantum))
        state.link_capacity = state.base_capacity
    elif n_contended:
        state.growth_base = None
        reduction = sum(
            uncapped_desired[f] * (1.0 - state.epsilon)
            for f in flows
            if state.contended[f]
        )
        effective = max(total, state.base_capacity - reduction)
        state.link_capacity = min(state.initial_capacity, max(effective, quantum))
        state.caps = {f: epoch_rates[f] for f in flows if state.contended[f]}
    else:
        settled = min(max(total, state.base_capacity), state.initial_capacity)
        if settled < state.initial_capacity:
            if state.growth_base is None:
                state.growth_base = settled
            settled = min(state.initial_capacity, settled + quantum)
        state.base_capacity = settled
        state.link_capacity = settled
    return state


def desired_allocation(
    state: LinkCapacityState, least: Mapping, profile: PopularityProfile
) -> tuple:
    """Desired rates for the current capacity, contention caps and growth credit.

    Returns ``(allocation, uncapped)`` where ``uncapped`` maps each flow to its
    desired rate before contention caps were applied.
    """
    if state.growth_base is not None and state.growth_base < state.link_capacity:
        alloc = drcm.compute_desired_rates(state.growth_base, least, profile)
        desired = dict(alloc.desired)
        desired[profile.top] += state.link_capacity - state.growth_base
        alloc = drcm.RateAllocation(
            desired=desired,
            least=alloc.least,
            shares=alloc.shares,
            order=alloc.order,
            link_capacity=state.link_capacity,
            floor_branch=alloc.floor_branch,
        )
    else:
        alloc = drcm.compute_desired_rates(state.link_capacity, least, profile)
    uncapped = dict(alloc.desired)
    frozen = frozenset()
    for f in alloc.order:
        if f in state.caps:
            alloc = drcm.recompute_with_cap(alloc, f, state.caps[f], frozen)
            frozen = frozen | {f}
    return alloc, uncapped
