"""Receiver-side per-flow rate estimation.

Holds the arrival-based rate estimate, its EWMA, the receiver's smoothed RTT
and the smoothed packet inter-arrival time. Rates are bits/second and times
are seconds throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import ConfigError

RTT_GAIN = 1.0 / 8.0
ARRIVAL_GAIN = 1.0 / 8.0


@dataclass
class RateEstimate:
    rate: float = 0.0
    prev_rate: float = 0.0
    last_arrival: Optional[float] = None
    ewma: float = 0.0
    prev_ewma: float = 0.0
    srtt: float = 0.1
    has_rtt_sample: bool = False
    smoothed_gap: float = 0.0
    has_gap_sample: bool = False


def update_rate(est: RateEstimate, packet_size_bits: float, arrival: float) -> RateEstimate:
    """Advance the arrival-rate estimate by one packet.

    The new rate is ``(size + srtt * prev) / (srtt + gap)``, a TCP-Jersey style
    estimator evaluated at the receiver. A flow with no recorded arrival uses a
    zero gap.
    """
    if est.srtt <= 0.0:
        raise ValueError("srtt must be positive")
    if est.last_arrival is None:
        gap = 0.0
    else:
        gap = arrival - est.last_arrival
        if gap < 0.0:
            raise ValueError(
                f"arrival {arrival} precedes previous arrival {est.last_arrival}"
            )
    est.prev_rate = est.rate
    est.rate = (packet_size_bits + est.srtt * est.prev_rate) / (est.srtt + gap)
    est.last_arrival = arrival
    return est


def check_sigma(sigma: float) -> None:
    if not 0.0 <= sigma < 1.0:
        raise ConfigError(f"sigma must lie in [0, 1), got {sigma}")


def ewma(previous: float, sample: float, sigma: float) -> float:
    return sigma * previous + (1.0 - sigma) * sample


def update_ewma(est: RateEstimate, sigma: float) -> RateEstimate:
    check_sigma(sigma)
    est.prev_ewma = est.ewma
    est.ewma = ewma(est.prev_ewma, est.rate, sigma)
    return est


def update_srtt(est: RateEstimate, sample: float, gain: float = RTT_GAIN) -> RateEstimate:
    if not sample > 0.0 or not math.isfinite(sample):
        raise ValueError(f"RTT sample must be positive, got {sample}")
    if not est.has_rtt_sample:
        est.srtt = sample
        est.has_rtt_sample = True
    else:
        est.srtt = (1.0 - gain) * est.srtt + gain * sample
    return est


def update_smoothed_arrival(
    est: RateEstimate, gap: float, gain: float = ARRIVAL_GAIN
) -> RateEstimate:
    if gap < 0.0:
        raise ValueError(f"inter-arrival gap must be non-negative, got {gap}")
    if not est.has_gap_sample:
        est.smoothed_gap = gap
        est.has_gap_sample = True
    else:
        est.smoothed_gap = (1.0 - gain) * est.smoothed_gap + gain * gap
    return est
