"""Small shared numerical kernels: Simpson quadrature and classic RK4."""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = ["composite_simpson", "interval_integrals", "right_cumulative", "rk4"]


def composite_simpson(f: Callable, a: float, b: float, n: int) -> float:
    """Composite Simpson rule with ``n`` (even) subintervals; ``f`` vectorized."""
    if n % 2:
        raise ValueError("composite_simpson needs an even subinterval count")
    x = np.linspace(a, b, n + 1)
    y = np.asarray(f(x), dtype=float)
    h = (b - a) / n
    return float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-2:2].sum()))


def interval_integrals(f: Callable, nodes: np.ndarray, panels: int = 2) -> np.ndarray:
    """Simpson integral of ``f`` over each [nodes[j], nodes[j+1]].

    Each interval is split into ``panels`` Simpson panels, so integrands that
    are smooth between nodes (e.g. built from piecewise-linear interpolants
    on the same nodes) are integrated at full Simpson order.
    """
    nodes = np.asarray(nodes, dtype=float)
    m = nodes.size - 1
    k = 2 * panels  # quadrature subintervals per node interval
    offsets = np.linspace(0.0, 1.0, k + 1)
    pts = nodes[:-1, None] + np.diff(nodes)[:, None] * offsets[None, :]
    vals = np.asarray(f(pts.ravel()), dtype=float).reshape(m, k + 1)
    w = np.ones(k + 1)
    w[1:-1:2] = 4.0
    w[2:-2:2] = 2.0
    h = np.diff(nodes) / k
    return h / 3.0 * (vals @ w)


def right_cumulative(f: Callable, nodes: np.ndarray, panels: int = 2) -> np.ndarray:
    """Integrals of ``f`` from each node to the last one (zero at the end)."""
    seg = interval_integrals(f, nodes, panels=panels)
    out = np.zeros(len(seg) + 1)
    out[:-1] = np.cumsum(seg[::-1])[::-1]
    return out


def rk4(f: Callable, y0: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Classic fourth-order Runge-Kutta for y' = f(t, y) on the given times.

    Returns the solution sampled at every node of ``times`` with shape
    ``(len(times),) + y0.shape``.
    """
    times = np.asarray(times, dtype=float)
    y = np.asarray(y0, dtype=float)
    out = np.empty((times.size,) + y.shape)
    out[0] = y
    for j in range(times.size - 1):
        t, h = times[j], times[j + 1] - times[j]
        k1 = f(t, y)
        k2 = f(t + h / 2.0, y + h / 2.0 * k1)
        k3 = f(t + h / 2.0, y + h / 2.0 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[j + 1] = y
    return out
