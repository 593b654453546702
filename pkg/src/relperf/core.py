"""Agent parameters, uniform time grids, and discrete type distributions.

Everything here is an immutable value type, and all operations on them are
pure functions, so objects can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "AgentType",
    "TimeGrid",
    "TypeDistribution",
    "ValidationError",
    "agent_violations",
    "validate_agent",
]

# Tolerance for the "weights sum to one" check on type distributions.
WEIGHT_TOL = 1e-12


class ValidationError(ValueError):
    """A domain object violates one of its parameter constraints."""


@dataclass(frozen=True)
class AgentType:
    """Parameter vector of a single agent (or of one type in the mean-field game).

    Attributes
    ----------
    delta : float
        Risk tolerance of the exponential utility, > 0.
    theta : float
        Competition weight on the population average, in [0, 1).
    mu : float
        Drift of the agent's stock, > 0 (units 1/time).
    nu : float
        Idiosyncratic volatility, >= 0 (units 1/sqrt(time)).
    sigma : float
        Common-noise volatility, >= 0 (units 1/sqrt(time)).

    A valid agent additionally satisfies sigma + nu > 0 (the stock price is
    not deterministic).
    """

    delta: float
    theta: float
    mu: float
    nu: float
    sigma: float

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "theta": self.theta,
            "mu": self.mu,
            "nu": self.nu,
            "sigma": self.sigma,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AgentType":
        try:
            agent = cls(
                delta=float(data["delta"]),
                theta=float(data["theta"]),
                mu=float(data["mu"]),
                nu=float(data["nu"]),
                sigma=float(data["sigma"]),
            )
        except KeyError as exc:
            raise ValidationError(f"agent is missing field {exc.args[0]!r}") from None
        validate_agent(agent)
        return agent


def agent_violations(agent: AgentType) -> list[str]:
    """Return one message per violated parameter constraint (empty if valid)."""
    out = []
    vals = (agent.delta, agent.theta, agent.mu, agent.nu, agent.sigma)
    if not all(np.isfinite(v) for v in vals):
        out.append("all parameters must be finite")
        return out
    if not agent.delta > 0:
        out.append("delta must be > 0")
    if not (0.0 <= agent.theta < 1.0):
        out.append("theta must lie in [0,1)")
    if not agent.mu > 0:
        out.append("mu must be > 0")
    if agent.nu < 0:
        out.append("nu must be >= 0")
    if agent.sigma < 0:
        out.append("sigma must be >= 0")
    if agent.sigma >= 0 and agent.nu >= 0 and not agent.sigma + agent.nu > 0:
        out.append("sigma+nu must be > 0")
    return out


def validate_agent(agent: AgentType) -> None:
    """Raise :class:`ValidationError` listing every violated constraint."""
    problems = agent_violations(agent)
    if problems:
        raise ValidationError("; ".join(problems))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``n_points`` nodes on [t0, T], endpoints included."""

    t0: float
    T: float
    n_points: int

    def __post_init__(self):
        if not (np.isfinite(self.t0) and np.isfinite(self.T)):
            raise ValidationError("grid endpoints must be finite")
        if self.t0 < 0:
            raise ValidationError("t0 must be >= 0")
        if not self.T > self.t0:
            raise ValidationError("T must exceed t0")
        if self.n_points < 2:
            raise ValidationError("n_points must be >= 2")

    @cached_property
    def times(self) -> np.ndarray:
        t = np.linspace(self.t0, self.T, self.n_points)
        t.flags.writeable = False
        return t

    @property
    def step(self) -> float:
        return (self.T - self.t0) / (self.n_points - 1)

    def to_dict(self) -> dict:
        return {"t0": self.t0, "T": self.T, "n_points": self.n_points}

    @classmethod
    def from_dict(cls, data: Mapping) -> "TimeGrid":
        try:
            return cls(float(data["t0"]), float(data["T"]), int(data["n_points"]))
        except KeyError as exc:
            raise ValidationError(f"grid is missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class TypeDistribution:
    """Finite discrete law over agent types.

    ``atoms`` is a sequence of (AgentType, weight) pairs; weights are strictly
    positive and sum to one (within 1e-12).  Every expectation over the type
    is an exact weighted sum, see :meth:`expect`.
    """

    atoms: tuple[tuple[AgentType, float], ...]

    def __init__(self, atoms: Iterable[tuple[AgentType, float]]):
        object.__setattr__(self, "atoms", tuple((a, float(w)) for a, w in atoms))
        if not self.atoms:
            raise ValidationError("type distribution needs at least one atom")
        weights = np.array([w for _, w in self.atoms])
        if np.any(weights <= 0):
            raise ValidationError("atom weights must be > 0")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValidationError(
                f"atom weights must sum to 1 (got {weights.sum():.17g})"
            )
        for agent, _ in self.atoms:
            validate_agent(agent)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.array([w for _, w in self.atoms])
        w.flags.writeable = False
        return w

    @cached_property
    def types(self) -> tuple[AgentType, ...]:
        return tuple(a for a, _ in self.atoms)

    def field(self, name: str) -> np.ndarray:
        """Per-atom array of one agent parameter ('delta', 'theta', ...)."""
        return np.array([getattr(a, name) for a, _ in self.atoms])

    def expect(self, fn: Callable[[AgentType], float]) -> float:
        """Exact expectation of ``fn`` over the type law (weighted sum)."""
        return float(sum(w * fn(a) for a, w in self.atoms))

    def expect_values(self, values: Sequence[float] | np.ndarray) -> float:
        """Weighted sum of per-atom values aligned with :attr:`types`."""
        values = np.asarray(values, dtype=float)
        return float(self.weights @ values)

    def to_dict(self) -> dict:
        return {
            "atoms": [{"type": a.to_dict(), "weight": w} for a, w in self.atoms]
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "TypeDistribution":
        try:
            atoms = [
                (AgentType.from_dict(item["type"]), float(item["weight"]))
                for item in data["atoms"]
            ]
        except KeyError as exc:
            raise ValidationError(
                f"type distribution is missing field {exc.args[0]!r}"
            ) from None
        return cls(atoms)
