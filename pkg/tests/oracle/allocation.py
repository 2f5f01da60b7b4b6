"""Exact-arithmetic re-evaluation of the desired-rate formulas."""

from fractions import Fraction


def desired_rates_exact(l_c, least, centrality, order):
    """Desired rate per flow, evaluated in rationals.

    Args:
        l_c: link capacity.
        least: flow -> least rate.
        centrality: flow -> degree centrality.
        order: flows by decreasing popularity.
    """
    L = Fraction(l_c)
    lows = {f: Fraction(least[f]) for f in order}
    cent = {f: Fraction(centrality[f]) for f in order}
    total_c = sum(cent.values())
    if total_c == 0:
        share = {f: Fraction(1, len(order)) for f in order}
    else:
        share = {f: cent[f] / total_c for f in order}
    low_sum = sum(lows.values())
    if L >= low_sum:
        return {f: lows[f] + share[f] * (L - low_sum) for f in order}, True
    return {f: share[f] * L for f in order}, False
