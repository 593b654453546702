"""Analytic identity checks tying the closed forms to their derivation.

The equilibrium is built from an exponential value-function ansatz
V_i(t, x, y) = (1/delta_i)(1 - theta_i/n) exp(f_i(t) x + g_i(t) y + h_i(t))
whose coefficient functions satisfy two Riccati-type ODEs and a cancellation
identity, and from two first-order conditions linking the adjoint process to
the optimal investment and consumption.  These residuals should vanish to
round-off along the closed-form equilibrium and grow when the strategy is
perturbed, which makes them a sharp self-test of the implementation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import AgentType, TimeGrid
from .nagent import NAgentEquilibrium

__all__ = [
    "AnsatzFG",
    "FGResiduals",
    "ansatz_for",
    "check_fg",
    "foc_residuals",
    "reconstruct_consumption",
]


@dataclass(frozen=True)
class AnsatzFG:
    """Coefficient functions of the exponential value-function ansatz.

    f(t) = -(1/delta)(1 - theta/n) / (T+1-t),
    g(t) = (theta/delta) / (T+1-t),
    h(t) = the per-agent drift adjustment evaluated along the equilibrium.
    """

    f: Callable[[float], float]
    g: Callable[[float], float]
    h: Callable[[float], float]
    f_terminal: float
    g_terminal: float


def ansatz_for(eq: NAgentEquilibrium, i: int) -> AnsatzFG:
    """Ansatz coefficients of agent ``i`` under the given equilibrium."""
    agent = eq.pop.agents[i]
    n = eq.pop.n
    T = eq.horizon
    own = 1.0 - agent.theta / n

    def f(t):
        return -(own / agent.delta) / (T + 1.0 - np.asarray(t, dtype=float))

    def g(t):
        return (agent.theta / agent.delta) / (T + 1.0 - np.asarray(t, dtype=float))

    return AnsatzFG(f=f, g=g, h=lambda t: eq.hhat(i, t),
                    f_terminal=-own / agent.delta,
                    g_terminal=agent.theta / agent.delta)


@dataclass
class FGResiduals:
    """Max grid residuals of the two coefficient ODEs and the cancellation
    identity theta/(1 - theta/n) * f + g = 0."""

    ode_f: float
    ode_g: float
    cancellation: float

    def max(self) -> float:
        return max(self.ode_f, self.ode_g, self.cancellation)


def check_fg(agent: AgentType, n: int, grid: TimeGrid) -> FGResiduals:
    """Evaluate the coefficient-ODE residuals with analytic derivatives.

    f' + (delta/(1-theta/n)) f^2 and g' + (delta/(1-theta/n)) f g vanish
    identically for the closed forms; this returns their max magnitudes over
    the grid (pure floating-point noise for a correct implementation).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    T = grid.T
    t = grid.times
    rem = T + 1.0 - t
    own = 1.0 - agent.theta / n
    f = -(own / agent.delta) / rem
    g = (agent.theta / agent.delta) / rem
    df = -(own / agent.delta) / rem**2
    dg = (agent.theta / agent.delta) / rem**2
    lam = agent.delta / own
    return FGResiduals(
        ode_f=float(np.abs(df + lam * f**2).max()),
        ode_g=float(np.abs(dg + lam * f * g).max()),
        cancellation=float(np.abs(agent.theta / own * f + g).max()),
    )


def _split_state(eq: NAgentEquilibrium, i: int, x: np.ndarray):
    """Own wealth and the competitors' n-scaled average from a state vector."""
    x = np.asarray(x, dtype=float)
    own = x[..., i]
    cross = (x.sum(axis=-1) - own) / eq.pop.n
    return own, cross


def foc_residuals(eq: NAgentEquilibrium, i: int, t: float, x,
                  pi_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Relative first-order-condition residuals at states ``x`` (last axis n).

    Builds the adjoint value p(t) from the ansatz of agent ``i`` and checks

      investment:  mu p + nu q_own + sigma q_common = 0,
      consumption: lam(T-t) p = (1/delta)(1-theta/n)
                   exp(-(1/delta)(1-theta/n) c_i + (theta/delta) cbar_i),

    both normalized by |p(t)| so the scale of the exponential drops out.
    ``pi_scale`` multiplies agent i's investment to expose the sensitivity
    of the investment condition (1.0 reproduces the equilibrium).
    """
    agent = eq.pop.agents[i]
    n = eq.pop.n
    ansatz = ansatz_for(eq, i)
    f = float(ansatz.f(t))
    g = float(ansatz.g(t))
    vol2 = agent.nu**2 + agent.sigma**2

    pi_i = pi_scale * float(eq.pi(i, t))
    sig_avg = float(
        sum(eq.pi_coefficients[k] * eq.pop.agents[k].sigma for k in range(n) if k != i)
        * (eq.horizon + 1.0 - t) / n
    )
    # q_own/p = f nu pi, q_common/p = f sigma pi + g sig_avg.
    r_invest = abs(agent.mu + vol2 * f * pi_i + agent.sigma * g * sig_avg)
    r_invest = r_invest / abs(agent.mu)  # scale against the leading term

    x = np.asarray(x, dtype=float)
    own_x, cross_x = _split_state(eq, i, x)
    h = float(ansatz.h(t))
    log_p_exp = f * own_x + g * cross_x + h  # exponent of p over its prefactor

    icpts = eq.intercepts_at(t)
    rem = eq.horizon + 1.0 - t
    c_all = x / rem + icpts
    own_c = c_all[..., i]
    cross_c = (c_all.sum(axis=-1) - own_c) / n
    own_coef = -(1.0 - agent.theta / n) / agent.delta
    rhs_exp = own_coef * own_c + (agent.theta / agent.delta) * cross_c
    log_lam = float(eq.discount.log_value(eq.horizon - t))
    # residual / |lam p| = |1 - exp(rhs_exp - log_p_exp - log_lam)|
    r_consume = np.abs(-np.expm1(rhs_exp - log_p_exp - log_lam))
    return np.broadcast_to(np.asarray(r_invest), r_consume.shape).copy(), r_consume


def reconstruct_consumption(eq: NAgentEquilibrium, i: int, t: float, x) -> np.ndarray:
    """Consumption of agent ``i`` rebuilt through the reply formula.

    Uses the (f, g, h) route: own and cross wealth terms, the h drift
    adjustment, the discount term, and the competitors' equilibrium
    consumption average.  Must match the direct closed form.
    """
    agent = eq.pop.agents[i]
    n = eq.pop.n
    own = 1.0 - agent.theta / n
    rem = eq.horizon + 1.0 - t
    x = np.asarray(x, dtype=float)
    own_x, cross_x = _split_state(eq, i, x)
    icpts = eq.intercepts_at(t)
    c_all = x / rem + icpts
    cross_c = (c_all.sum(axis=-1) - c_all[..., i]) / n
    h = float(eq.hhat(i, t))
    log_lam = float(eq.discount.log_value(eq.horizon - t))
    return (own_x / rem - (agent.theta / own) * cross_x / rem
            - (agent.delta / own) * (h + log_lam)
            + (agent.theta / own) * cross_c)
