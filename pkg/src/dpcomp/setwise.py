"""Set-wise accounting across heterogeneous privacy guarantees.

An analyst registers a set of mechanisms up front -- pure DP, bounded
range, concentrated (CDP), or zero-concentrated (zCDP) -- and receives a
single global (eps_g, delta) guarantee that holds for any adaptive order
and any subset of executions.  The bound depends only on the registered
set, so it is computed eagerly and cached; consumption merely tracks
which registrations have been spent.

Two accounting routes are provided and kept separate: the subgaussian
(CDP) route, which pure DP and BR convert into, and the zCDP route with
per-mechanism delta slack.  Mixing zCDP registrations into the CDP route
is an error rather than a silent fallback.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Union

__all__ = [
    "PureDP",
    "BoundedRange",
    "Cdp",
    "Zcdp",
    "PrivacyClass",
    "CdpPair",
    "AccountantStateError",
    "ConsumeMismatchError",
    "dp_mean_loss",
    "br_mean_loss",
    "convert_to_cdp",
    "convert_to_zcdp",
    "zcdp_dp_guarantee",
    "global_bound_homogeneous",
    "SetwiseAccountant",
]


class AccountantStateError(RuntimeError):
    """Registration attempted after consumption began."""


class ConsumeMismatchError(ValueError):
    """Consumed guarantee does not match an unspent registration."""


@dataclass(frozen=True)
class PureDP:
    """Pure eps-DP guarantee."""

    eps: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.eps) and self.eps > 0):
            raise ValueError(f"eps must be positive and finite, got {self.eps}")


@dataclass(frozen=True)
class BoundedRange:
    """alpha-bounded-range guarantee (e.g. one exponential mechanism)."""

    alpha: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")


@dataclass(frozen=True)
class Cdp:
    """(mu, tau)-concentrated guarantee: subgaussian loss with mean mu."""

    mu: float
    tau: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu) and self.mu >= 0):
            raise ValueError(f"mu must be nonnegative and finite, got {self.mu}")
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")


@dataclass(frozen=True)
class Zcdp:
    """(delta, xi, rho) zero-concentrated guarantee with delta slack."""

    delta: float
    xi: float
    rho: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.delta < 1.0):
            raise ValueError(f"delta must lie in [0,1), got {self.delta}")
        if not math.isfinite(self.xi):
            raise ValueError(f"xi must be finite, got {self.xi}")
        if not (math.isfinite(self.rho) and self.rho >= 0):
            raise ValueError(f"rho must be nonnegative and finite, got {self.rho}")


PrivacyClass = Union[PureDP, BoundedRange, Cdp, Zcdp]

_TAGS = {PureDP: "pure_dp", BoundedRange: "br", Cdp: "cdp", Zcdp: "zcdp"}


@dataclass(frozen=True)
class CdpPair:
    """Subgaussian summary (mean mu, scale tau) of one privacy loss."""

    mu: float
    tau: float


def dp_mean_loss(eps: float) -> float:
    """Expected privacy loss of the worst-case pure eps-DP pair."""
    return eps * math.tanh(eps / 2.0)


def br_mean_loss(alpha: float) -> float:
    """Worst-case expected privacy loss of an alpha-BR mechanism.

    With r = alpha / (e^alpha - 1) the mean is r - 1 - ln r.  Small alpha
    goes through s = r - 1 and log1p (value ~ alpha^2/24); large alpha
    computes ln r directly, since log1p(s) with s -> -1 loses digits.
    Both routes hold full precision at the crossover.
    """
    if not (math.isfinite(alpha) and alpha > 0):
        raise ValueError(f"alpha must be positive and finite, got {alpha}")
    if alpha > 4.0:
        ln_r = math.log(alpha) - alpha - math.log1p(-math.exp(-alpha))
        return math.exp(ln_r) - 1.0 - ln_r
    em = math.expm1(alpha)
    s = (alpha - em) / em
    return s - math.log1p(s)


def convert_to_cdp(c: PrivacyClass) -> CdpPair:
    """Subgaussian (mu, tau) summary of a guarantee, for the CDP route.

    zCDP guarantees carry delta slack and do not fit this route; convert
    them with convert_to_zcdp instead.
    """
    if isinstance(c, PureDP):
        return CdpPair(mu=dp_mean_loss(c.eps), tau=c.eps)
    if isinstance(c, BoundedRange):
        return CdpPair(mu=br_mean_loss(c.alpha), tau=c.alpha / 2.0)
    if isinstance(c, Cdp):
        return CdpPair(mu=c.mu, tau=c.tau)
    if isinstance(c, Zcdp):
        raise ValueError("zCDP guarantees use the zCDP route, not the CDP route")
    raise TypeError(f"unknown privacy class {type(c).__name__}")


def convert_to_zcdp(c: PrivacyClass) -> Zcdp:
    """(delta, xi, rho) summary of a guarantee, for the zCDP route."""
    if isinstance(c, PureDP):
        return Zcdp(delta=0.0, xi=0.0, rho=c.eps**2 / 2.0)
    if isinstance(c, BoundedRange):
        rho = c.alpha**2 / 8.0
        return Zcdp(delta=0.0, xi=br_mean_loss(c.alpha) - rho, rho=rho)
    if isinstance(c, Cdp):
        return Zcdp(delta=0.0, xi=c.mu - c.tau**2 / 2.0, rho=c.tau**2 / 2.0)
    if isinstance(c, Zcdp):
        return c
    raise TypeError(f"unknown privacy class {type(c).__name__}")


def zcdp_dp_guarantee(z: Zcdp, delta: float) -> tuple[float, float]:
    """(eps_g, total delta) of a zCDP guarantee at conversion slack delta."""
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0,1), got {delta}")
    eps = z.xi + z.rho + 2.0 * math.sqrt(z.rho * math.log(1.0 / delta))
    return eps, delta + z.delta


def global_bound_homogeneous(
    m_dp: int,
    eps: float,
    m_br: int,
    alpha: float,
    m_cdp: int,
    mu: float,
    tau: float,
    delta: float,
) -> float:
    """Closed-form CDP-route bound for a homogeneous registered set.

    m_dp pure eps-DP, m_br alpha-BR and m_cdp (mu, tau)-CDP mechanisms at
    failure budget delta.  Counts may be zero; their parameters are then
    ignored.
    """
    if min(m_dp, m_br, m_cdp) < 0 or m_dp + m_br + m_cdp == 0:
        raise ValueError("need nonnegative counts with at least one mechanism")
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0,1), got {delta}")
    mean = 0.0
    var = 0.0
    if m_dp:
        mean += m_dp * dp_mean_loss(eps)
        var += m_dp * eps**2
    if m_br:
        mean += m_br * br_mean_loss(alpha)
        var += m_br * alpha**2 / 4.0
    if m_cdp:
        mean += m_cdp * mu
        var += m_cdp * tau**2
    return mean + math.sqrt(2.0 * var * math.log(1.0 / delta))


def _canonical_key(c: PrivacyClass) -> tuple:
    tag = _TAGS[type(c)]
    if isinstance(c, PureDP):
        vals = (c.eps,)
    elif isinstance(c, BoundedRange):
        vals = (c.alpha,)
    elif isinstance(c, Cdp):
        vals = (c.mu, c.tau)
    else:
        vals = (c.delta, c.xi, c.rho)
    return (tag,) + tuple(round(v, 12) for v in vals)


def _to_dict(c: PrivacyClass) -> dict:
    if isinstance(c, PureDP):
        return {"tag": "pure_dp", "eps": c.eps}
    if isinstance(c, BoundedRange):
        return {"tag": "br", "alpha": c.alpha}
    if isinstance(c, Cdp):
        return {"tag": "cdp", "mu": c.mu, "tau": c.tau}
    return {"tag": "zcdp", "delta": c.delta, "xi": c.xi, "rho": c.rho}


def _from_dict(d: dict) -> PrivacyClass:
    tag = d.get("tag")
    if tag == "pure_dp":
        return PureDP(eps=d["eps"])
    if tag == "br":
        return BoundedRange(alpha=d["alpha"])
    if tag == "cdp":
        return Cdp(mu=d["mu"], tau=d["tau"])
    if tag == "zcdp":
        return Zcdp(delta=d["delta"], xi=d["xi"], rho=d["rho"])
    raise ValueError(f"unknown tag {tag!r}")


class SetwiseAccountant:
    """Tracks a registered set of guarantees and its global bound.

    Single-writer: register everything first, then consume.  The first
    consume freezes registration.  The global bound covers any adaptive
    order and subset of the registered set, so it never changes after
    registration.
    """

    def __init__(self, delta_slack: float = 1e-6) -> None:
        if not (0.0 < delta_slack < 1.0):
            raise ValueError(f"delta_slack must lie in (0,1), got {delta_slack}")
        self.delta_slack = delta_slack
        self._registered: list[PrivacyClass] = []
        self._consumed: list[PrivacyClass] = []
        # cached CDP-route sums; None marks a zCDP registration present
        self._mu_sum: float | None = 0.0
        self._tau_sq_sum: float | None = 0.0
        self._xi_rho_sum = 0.0
        self._rho_sum = 0.0
        self._delta_sum = 0.0

    @property
    def registered(self) -> tuple[PrivacyClass, ...]:
        return tuple(self._registered)

    @property
    def consumed(self) -> tuple[PrivacyClass, ...]:
        return tuple(self._consumed)

    def register(self, c: PrivacyClass) -> "SetwiseAccountant":
        """Add a guarantee to the set; only allowed before any consume."""
        if self._consumed:
            raise AccountantStateError(
                "registration is frozen once consumption has started"
            )
        if not isinstance(c, (PureDP, BoundedRange, Cdp, Zcdp)):
            raise TypeError(f"unknown privacy class {type(c).__name__}")
        self._registered.append(c)
        if isinstance(c, Zcdp):
            self._mu_sum = None
            self._tau_sq_sum = None
        elif self._mu_sum is not None:
            pair = convert_to_cdp(c)
            self._mu_sum += pair.mu
            self._tau_sq_sum += pair.tau**2
        z = convert_to_zcdp(c)
        self._xi_rho_sum += z.xi + z.rho
        self._rho_sum += z.rho
        self._delta_sum += z.delta
        return self

    def consume(self, c: PrivacyClass) -> "SetwiseAccountant":
        """Mark one registered guarantee as spent (exact match, rounded).

        Matching is field-wise after canonical rounding to 1e-12; a
        consume with no unspent matching registration is an error.
        """
        key = _canonical_key(c)
        spent: dict[tuple, int] = {}
        for used in self._consumed:
            k = _canonical_key(used)
            spent[k] = spent.get(k, 0) + 1
        for reg in self._registered:
            k = _canonical_key(reg)
            if k == key:
                if spent.get(k, 0) == 0:
                    self._consumed.append(reg)
                    return self
                spent[k] -= 1
        raise ConsumeMismatchError(f"no unspent registration matches {c}")

    def global_bound_cdp(self, delta: float | None = None) -> float:
        """eps_g of the subgaussian route at failure budget delta.

        Valid only when no zCDP guarantee was registered.
        """
        d = self.delta_slack if delta is None else delta
        if not (0.0 < d < 1.0):
            raise ValueError(f"delta must lie in (0,1), got {d}")
        if not self._registered:
            raise ValueError("no registered mechanisms")
        if self._mu_sum is None:
            raise ValueError("zCDP registrations present; use global_bound_zcdp")
        return self._mu_sum + math.sqrt(2.0 * self._tau_sq_sum * math.log(1.0 / d))

    def global_bound_zcdp(self, delta: float | None = None) -> tuple[float, float]:
        """(eps_g, total delta) of the zCDP route at conversion slack delta.

        Total delta adds the per-registration slacks on top of the
        conversion slack.
        """
        d = self.delta_slack if delta is None else delta
        if not (0.0 < d < 1.0):
            raise ValueError(f"delta must lie in (0,1), got {d}")
        if not self._registered:
            raise ValueError("no registered mechanisms")
        eps = self._xi_rho_sum + 2.0 * math.sqrt(self._rho_sum * math.log(1.0 / d))
        return eps, d + self._delta_sum

    def to_json(self) -> str:
        state = {
            "registered": [_to_dict(c) for c in self._registered],
            "consumed": [_to_dict(c) for c in self._consumed],
            "delta_slack": self.delta_slack,
        }
        return json.dumps(state, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, payload: str) -> "SetwiseAccountant":
        state = json.loads(payload)
        acc = cls(delta_slack=state["delta_slack"])
        for d in state["registered"]:
            acc.register(_from_dict(d))
        for d in state["consumed"]:
            acc.consume(_from_dict(d))
        return acc
