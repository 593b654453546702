"""Closed-form open-loop equilibrium of the n-agent investment-consumption game.

Each of n >= 2 agents with exponential utility of risk tolerance delta
competes through a relative-performance term weighted by theta, trading a
personal stock (drift mu, idiosyncratic volatility nu, common volatility
sigma) and consuming continuously over [0, T] under a general discount
function.  The unique simple equilibrium in deterministic-investment /
affine-consumption strategies is explicit:

    pi_i(t) = a_i * (T + 1 - t),
    a_i     = [delta_i mu_i + theta_i sigma_i phi / (1 - psi)] / w_i,
    w_i     = sigma_i^2 + (1 - theta_i/n) nu_i^2,

    c_i(t, x) = x_i / (T + 1 - t) + q_i(t),

where phi, psi are population averages (see :func:`aggregates`) and the
intercept q_i collects a per-agent drift adjustment ``hhat`` plus the
discount term, see :func:`c_star`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .core import AgentType, TimeGrid, ValidationError, validate_agent
from .discount import DiscountFunction

__all__ = [
    "AgentConstants",
    "DegenerateFixedPointError",
    "EquilibriumStrategyN",
    "NAgentAggregates",
    "NAgentEquilibrium",
    "Population",
    "agent_constants",
    "aggregates",
    "c_star",
    "equilibrium_strategy",
    "hhat",
    "investment_coefficients",
    "pi_star",
    "single_stock_h",
    "single_stock_strategy",
]

# Numerical guard: psi < 1 holds for every valid population, but rounded
# tabulated inputs could in principle land on the degenerate case.
_PSI_GUARD = 1.0 - 1e-12


class DegenerateFixedPointError(ArithmeticError):
    """The investment fixed point has no solution (competition feedback >= 1)."""


@dataclass(frozen=True)
class Population:
    """Ordered collection of n >= 2 valid agents."""

    agents: tuple[AgentType, ...]

    def __init__(self, agents: Sequence[AgentType]):
        object.__setattr__(self, "agents", tuple(agents))
        if len(self.agents) < 2:
            raise ValidationError("population needs at least two agents")
        for k, agent in enumerate(self.agents):
            try:
                validate_agent(agent)
            except ValidationError as exc:
                raise ValidationError(f"agent {k}: {exc}") from None

    @property
    def n(self) -> int:
        return len(self.agents)

    def field(self, name: str) -> np.ndarray:
        return np.array([getattr(a, name) for a in self.agents])

    @cached_property
    def _params(self) -> dict[str, np.ndarray]:
        out = {k: self.field(k) for k in ("delta", "theta", "mu", "nu", "sigma")}
        for v in out.values():
            v.flags.writeable = False
        return out

    def to_dict(self) -> dict:
        return {"agents": [a.to_dict() for a in self.agents]}

    @classmethod
    def from_dict(cls, data) -> "Population":
        try:
            agents = [AgentType.from_dict(item) for item in data["agents"]]
        except KeyError as exc:
            raise ValidationError(f"population is missing field {exc.args[0]!r}") from None
        return cls(agents)


@dataclass(frozen=True)
class NAgentAggregates:
    """Population averages driving the investment fixed point.

    ``phi_n`` and ``psi_n`` are the n-weighted averages of
    delta sigma mu / w and theta sigma^2 / w with w = sigma^2 +
    (1 - theta/n) nu^2; ``delta_bar`` and ``theta_bar`` are plain means.
    """

    phi_n: float
    psi_n: float
    delta_bar: float
    theta_bar: float


@dataclass(frozen=True)
class AgentConstants:
    """Per-agent constants built from competitor investment exposure.

    ``a``/``b`` are the competitor averages of sigma- and mu-weighted
    investment coefficients scaled by theta_i/delta_i, ``c`` is the
    corresponding idiosyncratic sum of squares (nonnegative, vanishing as
    n grows), and ``d`` combines them into the drift rate entering
    :func:`hhat`.
    """

    a: float
    b: float
    c: float
    d: float


def _weights(pop: Population) -> np.ndarray:
    p = pop._params
    return p["sigma"] ** 2 + (1.0 - p["theta"] / pop.n) * p["nu"] ** 2


def aggregates(pop: Population) -> NAgentAggregates:
    """Population averages (phi_n, psi_n, delta_bar, theta_bar)."""
    p = pop._params
    w = _weights(pop)
    phi = float(np.mean(p["delta"] * p["sigma"] * p["mu"] / w))
    psi = float(np.mean(p["theta"] * p["sigma"] ** 2 / w))
    agg = NAgentAggregates(
        phi_n=phi,
        psi_n=psi,
        delta_bar=float(np.mean(p["delta"])),
        theta_bar=float(np.mean(p["theta"])),
    )
    if agg.psi_n >= _PSI_GUARD or agg.theta_bar >= _PSI_GUARD:
        raise DegenerateFixedPointError(
            "investment/consumption fixed point is degenerate: "
            f"psi_n={agg.psi_n:.17g}, theta_bar={agg.theta_bar:.17g}"
        )
    return agg


def investment_coefficients(pop: Population) -> np.ndarray:
    """Slopes a_i of the equilibrium investment lines pi_i(t) = a_i (T+1-t)."""
    p = pop._params
    agg = aggregates(pop)
    w = _weights(pop)
    return (p["delta"] * p["mu"] + p["theta"] * p["sigma"] * agg.phi_n / (1.0 - agg.psi_n)) / w


def _constants_arrays(pop: Population) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (a, b, c, d) for all agents at once."""
    p = pop._params
    n = pop.n
    coef = investment_coefficients(pop)
    sig_c = p["sigma"] * coef
    mu_c = p["mu"] * coef
    nu_c2 = (p["nu"] * coef) ** 2
    ratio = p["theta"] / p["delta"]
    # Competitor sums via totals minus the own term.
    a = ratio * (sig_c.sum() - sig_c) / n
    b = ratio * (mu_c.sum() - mu_c) / n
    c = ratio**2 * (nu_c2.sum() - nu_c2) / n**2
    vol2 = p["nu"] ** 2 + p["sigma"] ** 2
    d = 0.5 * (p["mu"] + p["sigma"] * a) ** 2 / vol2 - 0.5 * (a**2 + c) - b
    return a, b, c, d


def agent_constants(pop: Population, i: int) -> AgentConstants:
    """Constants (a, b, c, d) of agent ``i``; requires psi_n < 1."""
    if not 0 <= i < pop.n:
        raise IndexError(f"agent index {i} out of range for n={pop.n}")
    a, b, c, d = _constants_arrays(pop)
    return AgentConstants(a=float(a[i]), b=float(b[i]), c=float(c[i]), d=float(d[i]))


def pi_star(pop: Population, i: int, t, horizon: float):
    """Equilibrium investment of agent ``i`` at time ``t`` (vectorized in t)."""
    coef = investment_coefficients(pop)[i]
    return coef * (horizon + 1.0 - np.asarray(t, dtype=float))


def hhat(pop: Population, d: DiscountFunction, i: int, t, horizon: float):
    """Drift adjustment entering agent ``i``'s consumption intercept.

    hhat_i(t) = (d_i/2) [1/(T+1-t) - (T+1-t)]
                - (1/(T+1-t)) * integral_t^T ln lam(T-s) ds.
    """
    di = agent_constants(pop, i).d
    t = np.asarray(t, dtype=float)
    rem = horizon + 1.0 - t
    return 0.5 * di * (1.0 / rem - rem) - d.log_integral(t, horizon) / rem


def _hhat_all(pop: Population, d: DiscountFunction, t, horizon: float) -> np.ndarray:
    """hhat for every agent; shape (n,) + shape(t)."""
    _, _, _, dd = _constants_arrays(pop)
    t = np.asarray(t, dtype=float)
    rem = horizon + 1.0 - t
    bracket = 1.0 / rem - rem
    lint = d.log_integral(t, horizon)
    return 0.5 * np.multiply.outer(dd, bracket) - (lint / rem)[None, ...]


def consumption_intercept(pop: Population, d: DiscountFunction, i: int, t,
                          horizon: float):
    """Intercept q_i(t) of the affine equilibrium consumption rule."""
    p = pop._params
    agg = aggregates(pop)
    hh = _hhat_all(pop, d, t, horizon)
    davg = p["delta"] @ hh / pop.n
    log_lam = d.log_value(horizon - np.asarray(t, dtype=float))
    comp = p["theta"][i] / (1.0 - agg.theta_bar)
    return (-p["delta"][i] * hh[i] - comp * davg
            - (p["delta"][i] + comp * agg.delta_bar) * log_lam)


def c_star(pop: Population, d: DiscountFunction, i: int, t, x_i, horizon: float):
    """Equilibrium consumption rate of agent ``i`` given own wealth ``x_i``.

    c_i(t, x) = x_i/(T+1-t) - delta_i hhat_i(t)
                - theta_i/(1-theta_bar) * mean_k(delta_k hhat_k(t))
                - (delta_i + theta_i delta_bar/(1-theta_bar)) ln lam(T-t).
    """
    t = np.asarray(t, dtype=float)
    return np.asarray(x_i, dtype=float) / (horizon + 1.0 - t) + consumption_intercept(
        pop, d, i, t, horizon
    )


def single_stock_h(mu: float, sigma: float, d: DiscountFunction, t, horizon: float):
    """Common intercept profile of the single-stock equilibrium.

    H(t) = (mu/(2 sigma))^2 [(T+1-t) - 1/(T+1-t)]
           + (1/(T+1-t)) * integral_t^T ln lam(T-s) ds.
    """
    if not sigma > 0:
        raise ValueError("single-stock formulas require sigma > 0")
    t = np.asarray(t, dtype=float)
    rem = horizon + 1.0 - t
    return (0.5 * mu / sigma) ** 2 * (rem - 1.0 / rem) + d.log_integral(t, horizon) / rem


@dataclass(frozen=True)
class SingleStockPolicy:
    """Investment level, consumption slope, and consumption intercept."""

    pi: float
    c_slope: float
    c_intercept: float

    def consumption(self, x) -> float:
        return self.c_slope * x + self.c_intercept


def single_stock_strategy(delta: float, theta: float, delta_bar: float,
                          theta_bar: float, mu: float, sigma: float,
                          d: DiscountFunction, t: float,
                          horizon: float) -> SingleStockPolicy:
    """Closed-form policy when all agents trade one common stock (nu = 0).

    The competition-inflated risk tolerance delta_hat = delta +
    theta delta_bar / (1 - theta_bar) scales both the investment line
    (mu/sigma^2) delta_hat (T+1-t) and the consumption intercept
    delta_hat (H(t) - ln lam(T-t)).
    """
    if not sigma > 0:
        raise ValueError("single-stock formulas require sigma > 0")
    if theta_bar >= 1.0:
        raise DegenerateFixedPointError("theta_bar must be < 1")
    delta_hat = delta + theta * delta_bar / (1.0 - theta_bar)
    rem = horizon + 1.0 - t
    hh = float(single_stock_h(mu, sigma, d, t, horizon))
    log_lam = float(d.log_value(horizon - t))
    return SingleStockPolicy(
        pi=delta_hat * mu / sigma**2 * rem,
        c_slope=1.0 / rem,
        c_intercept=delta_hat * (hh - log_lam),
    )


@dataclass(frozen=True)
class EquilibriumStrategyN:
    """Grid-sampled equilibrium strategy record.

    The investment part is stored exactly through the per-agent slopes
    ``pi_coeff`` (investment is linear in T+1-t); the consumption intercepts
    are sampled on the grid.  The own-wealth consumption slope 1/(T+1-t) is
    shared by all agents, and cross-wealth terms vanish: the equilibrium is
    simple.
    """

    grid: TimeGrid
    horizon: float
    pi_coeff: np.ndarray          # (n,)
    c_slope: np.ndarray           # (m,) samples of 1/(T+1-t)
    intercepts: np.ndarray        # (n, m) samples of q_i(t)
    simple: bool = True

    @property
    def n_agents(self) -> int:
        return self.pi_coeff.size

    def pi_values(self, i: int) -> np.ndarray:
        return self.pi_coeff[i] * (self.horizon + 1.0 - self.grid.times)

    def pi_at(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return np.multiply.outer(self.horizon + 1.0 - times, self.pi_coeff)

    def consumption_at(self, times) -> tuple[np.ndarray, np.ndarray]:
        """(P, q) with P (m, n, n) diagonal slope matrices and q (m, n)."""
        times = np.asarray(times, dtype=float)
        m, n = times.size, self.n_agents
        slope = 1.0 / (self.horizon + 1.0 - times)
        P = np.zeros((m, n, n))
        idx = np.arange(n)
        P[:, idx, idx] = slope[:, None]
        q = np.empty((m, n))
        for i in range(n):
            q[:, i] = np.interp(times, self.grid.times, self.intercepts[i])
        return P, q


class NAgentEquilibrium:
    """Evaluator bundling a population, discount, and horizon.

    Caches the aggregates and per-agent constants and exposes the closed
    forms exactly at any time; also implements the sampled-strategy
    interface (``pi_at`` / ``consumption_at``) used by the simulator.
    """

    def __init__(self, pop: Population, discount: DiscountFunction, horizon: float):
        if not horizon > 0:
            raise ValidationError("horizon must be > 0")
        self.pop = pop
        self.discount = discount
        self.horizon = float(horizon)
        self.aggregates = aggregates(pop)
        self.pi_coefficients = investment_coefficients(pop)
        self._a, self._b, self._c, self._d = _constants_arrays(pop)

    @property
    def n_agents(self) -> int:
        return self.pop.n

    def constants(self, i: int) -> AgentConstants:
        return AgentConstants(a=float(self._a[i]), b=float(self._b[i]),
                              c=float(self._c[i]), d=float(self._d[i]))

    def pi(self, i: int, t):
        return self.pi_coefficients[i] * (self.horizon + 1.0 - np.asarray(t, dtype=float))

    def hhat(self, i: int, t):
        t = np.asarray(t, dtype=float)
        rem = self.horizon + 1.0 - t
        lint = self.discount.log_integral(t, self.horizon)
        return 0.5 * self._d[i] * (1.0 / rem - rem) - lint / rem

    def _hhat_matrix(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        rem = self.horizon + 1.0 - t
        bracket = 1.0 / rem - rem
        lint = self.discount.log_integral(t, self.horizon)
        return 0.5 * np.multiply.outer(self._d, bracket) - (lint / rem)[None, ...]

    def intercepts_at(self, t) -> np.ndarray:
        """q_i(t) for every agent; shape (n,) + shape(t)."""
        p = self.pop._params
        agg = self.aggregates
        hh = self._hhat_matrix(t)
        davg = p["delta"] @ hh / self.pop.n
        log_lam = self.discount.log_value(self.horizon - np.asarray(t, dtype=float))
        comp = p["theta"] / (1.0 - agg.theta_bar)
        shape = (-1,) + (1,) * (hh.ndim - 1)
        return (-p["delta"].reshape(shape) * hh
                - comp.reshape(shape) * davg[None, ...]
                - (p["delta"] + comp * agg.delta_bar).reshape(shape) * log_lam[None, ...])

    def intercept(self, i: int, t):
        return self.intercepts_at(t)[i]

    def consumption(self, i: int, t, x_i):
        t = np.asarray(t, dtype=float)
        return np.asarray(x_i, dtype=float) / (self.horizon + 1.0 - t) + self.intercept(i, t)

    # Sampled-strategy interface (exact closed forms).

    def pi_at(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return np.multiply.outer(self.horizon + 1.0 - times, self.pi_coefficients)

    def consumption_at(self, times) -> tuple[np.ndarray, np.ndarray]:
        times = np.asarray(times, dtype=float)
        m, n = times.size, self.pop.n
        slope = 1.0 / (self.horizon + 1.0 - times)
        P = np.zeros((m, n, n))
        idx = np.arange(n)
        P[:, idx, idx] = slope[:, None]
        q = self.intercepts_at(times).T.copy()
        return P, q

    def sample(self, grid: TimeGrid) -> EquilibriumStrategyN:
        """Sample the equilibrium on ``grid`` (grid.T must equal the horizon)."""
        if abs(grid.T - self.horizon) > 1e-12:
            raise ValidationError("grid horizon must match the equilibrium horizon")
        times = grid.times
        return EquilibriumStrategyN(
            grid=grid,
            horizon=self.horizon,
            pi_coeff=self.pi_coefficients.copy(),
            c_slope=1.0 / (self.horizon + 1.0 - times),
            intercepts=self.intercepts_at(times),
        )


def equilibrium_strategy(pop: Population, d: DiscountFunction,
                         grid: TimeGrid) -> EquilibriumStrategyN:
    """Sample the closed-form equilibrium on ``grid`` (horizon = grid.T)."""
    return NAgentEquilibrium(pop, d, grid.T).sample(grid)
