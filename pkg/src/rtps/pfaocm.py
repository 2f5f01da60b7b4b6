"""Popularity-aware advertised window and delayed-ACK window control.

Per-flow state machine run by the receiver on every data arrival. The
advertised window steers the smoothed arrival rate into a band around the
flow's desired rate; the delayed-ACK window grows while the flow runs above
its band on an uncongested path and collapses on loss, timer expiry or an
under-served most-popular flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError
from .estimator import check_sigma, ewma


@dataclass(frozen=True)
class WindowParams:
    sigma: float = 0.3
    theta: float = 0.7
    phi: float = 3.0
    f: float = 1.0

    def __post_init__(self):
        check_sigma(self.sigma)
        if not 0.0 < self.theta < 1.0:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.phi > 1.0:
            raise ConfigError(f"phi must exceed 1, got {self.phi}")
        if not self.f > 0.0:
            raise ConfigError(f"tolerance factor f must be positive, got {self.f}")


@dataclass
class WindowState:
    awnd: int = 1
    awnd_prev: int = 1
    da: float = 0.0
    da_prev: float = 0.0
    ac: int = 0
    w: float = 0.0
    w_prev: float = 0.0
    e_ratio: float = 0.0
    factor: float = 0.0

    @property
    def delta(self) -> float:
        return self.w - self.w_prev


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def adjust_advertised_window(
    ws: WindowState,
    w: float,
    desired: float,
    srtt: float,
    packet_bits: float,
    params: WindowParams = WindowParams(),
) -> WindowState:
    """One advertised-window step; caller enforces the once-per-RTT pacing."""
    if not srtt > 0.0 or not packet_bits > 0.0:
        raise ValueError("srtt and packet size must be positive")
    low = desired * (1.0 - params.sigma)
    high = desired * (1.0 + params.sigma)
    if w < low:
        step = (desired - w) * params.theta * srtt / packet_bits
        awnd = max(1.0, step) + ws.awnd_prev
    elif w > high:
        step = 0.5 + (w - desired) * srtt / packet_bits
        awnd = ws.awnd_prev - step
    else:
        awnd = ws.awnd_prev
    ws.awnd = max(1, round_half_up(awnd))
    ws.awnd_prev = ws.awnd
    return ws


def window_for_rate(rate: float, srtt: float, packet_bits: float) -> float:
    """Packets in flight needed to sustain ``rate`` over one RTT."""
    return rate * srtt / packet_bits


def compute_factor(c: float, me: float, phi: float = 3.0) -> tuple:
    """Return ``(e_ratio, factor)`` for consumable rate ``c`` and max estimate ``me``.

    ``factor`` is 0 on a congested path (``c <= me * phi``) and otherwise lies
    strictly between ``(phi - 1) / phi`` and 1.
    """
    if c < 0.0 or me < 0.0:
        raise ValueError("rates must be non-negative")
    if c > me * phi:
        e_ratio = (c - me) / c
    else:
        e_ratio = 1.0 - phi
    return e_ratio, ((phi - 1.0) + e_ratio) / phi


def grow_delay_window(ws: WindowState) -> WindowState:
    ws.da = min(float(ws.awnd), (1.0 - ws.factor) + ws.da_prev)
    ws.da_prev = ws.da
    return ws


def shrink_delay_window(ws: WindowState) -> WindowState:
    ws.da = max(0.0, ws.da_prev - (1.0 - ws.factor))
    ws.da_prev = ws.da
    return ws


def effective_timeout(t_s: float, f: float) -> float:
    if not f > 0.0:
        raise ConfigError(f"tolerance factor f must be positive, got {f}")
    if t_s < 0.0:
        raise ValueError("smoothed inter-arrival time must be non-negative")
    return t_s * (2.0 + f)


def lpda(ws: WindowState) -> tuple:
    """Loss, popularity or timeout path: shrink or reset ``da`` and ACK now."""
    if ws.delta > 0.0:
        shrink_delay_window(ws)
    else:
        ws.da = 0.0
    ws.da_prev = ws.da
    ws.ac = 0
    ws.w_prev = ws.w
    return ws, True


def ida(
    ws: WindowState,
    out_of_order: bool,
    is_top: bool,
    desired: float,
    params: WindowParams = WindowParams(),
) -> tuple:
    """In-interval arrival: count towards ``da`` or ACK and retune ``da``."""
    low = desired * (1.0 - params.sigma)
    if ws.ac < ws.da:
        if out_of_order or (is_top and ws.w < low):
            return lpda(ws)
        ws.ac += 1
        return ws, False
    ws.ac = 0
    if ws.w >= desired * (1.0 + params.sigma):
        if ws.delta > 0.0:
            grow_delay_window(ws)
        else:
            shrink_delay_window(ws)
    elif ws.w < low:
        if ws.delta > 0.0:
            shrink_delay_window(ws)
        else:
            ws.da = 0.0
    ws.da_prev = ws.da
    return ws, True


class WindowEngine:
    """Per-flow driver sequencing the window updates for each data arrival.

    ``on_arrival`` applies, in order: the EWMA update, the advertised window
    step (at most once per ``srtt``), the congestion factor and then either
    the in-interval or the loss/timeout delayed-ACK path.
    """

    def __init__(self, params: WindowParams = WindowParams()):
        self.params = params
        self.state = WindowState()
        self.last_adjust = None

    def on_arrival(
        self,
        now: float,
        rate: float,
        desired: float,
        srtt: float,
        packet_bits: float,
        c: float,
        me: float,
        out_of_order: bool,
        is_top: bool,
        timer_expired: bool,
    ) -> bool:
        ws = self.state
        ws.w_prev = ws.w
        ws.w = ewma(ws.w, rate, self.params.sigma)
        if self.last_adjust is None or now - self.last_adjust >= srtt:
            adjust_advertised_window(ws, ws.w, desired, srtt, packet_bits, self.params)
            self.last_adjust = now
        ws.e_ratio, ws.factor = compute_factor(c, me, self.params.phi)
        if timer_expired:
            _, ack = lpda(ws)
        else:
            _, ack = ida(ws, out_of_order, is_top, desired, self.params)
        return ack

    def on_timer(self) -> bool:
        """Delayed-ACK timer fired; ACK only if data is pending."""
        if self.state.ac <= 0:
            return False
        lpda(self.state)
        return True
