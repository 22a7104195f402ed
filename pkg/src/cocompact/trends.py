"""Finite-data surrogates for limits: monotone-tail trend tests."""
import numpy as np

ZERO = 1e-14


def tail(values, frac=0.5, minimum=2):
    """The final ``frac`` of ``values`` (at least ``minimum`` entries)."""
    n = len(values)
    m = min(n, max(minimum, int(np.ceil(n * frac))))
    return list(values[n - m:])


def strictly_decreasing(values, zero=ZERO):
    """Strictly decreasing, except that runs of numerically zero values are allowed."""
    return all(b < a or (a <= zero and b <= zero) for a, b in zip(values[:-1], values[1:]))


def non_increasing(values, slack=0.0):
    return all(b <= a + slack for a, b in zip(values[:-1], values[1:]))


def tends_to_zero(values, tol, frac=0.5, strict=True):
    """Monotone-tail convergence to 0: decreasing over the final part, last value below ``tol``."""
    if len(values) == 0:
        return True
    t = tail(values, frac)
    mono = strictly_decreasing(t) if strict else non_increasing(t, slack=ZERO)
    return bool(mono and t[-1] <= tol)
