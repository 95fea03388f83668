"""Log-log slope fits for convergence sweeps and decay curves."""

from typing import List, Sequence

import numpy as np

_FLOOR = 1e-300


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x); zeros are floored."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("need at least two matching samples for a slope")
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.maximum(np.asarray(ys, dtype=float), _FLOOR))
    return float(np.polyfit(lx, ly, 1)[0])


def window_slopes(xs: Sequence[float], ys: Sequence[float]) -> List[float]:
    """Slope between each sample and the previous one; NaN for the first."""
    slopes = [float("nan")]
    for i in range(1, len(xs)):
        slopes.append(loglog_slope(xs[i - 1 : i + 1], ys[i - 1 : i + 1]))
    return slopes


def geometric_times(start: float, stop: float, count: int) -> List[float]:
    return [float(t) for t in np.geomspace(start, stop, count)]
