"""Closed-form parameter maps: sampling probabilities, graphical weights,
coupled-pair weights, eight-vertex weights and regime predicates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ROLE_NAMES = ("J", "J'", "U")
SELF_DUAL_TOL = 1e-10


class DegenerateBranch(ValueError):
    """K + K'' = 0: the graphical weights are not defined, use the dedicated law."""


def log_expm1(x: float) -> float:
    """log(e^x - 1) for x > 0 without overflow or cancellation."""
    if x <= 0:
        return -math.inf if x == 0 else math.nan
    if x > 30:
        return x + math.log1p(-math.exp(-x))
    return math.log(math.expm1(x))


@dataclass(frozen=True)
class Couplings:
    """Ordered couplings (K, K', K'') and the original role of each slot.

    ``roles[i]`` names which of J, J', U sits in slot i; a leading ``-`` marks
    a slot holding the negated coupling.
    """

    K: float
    Kp: float
    Kpp: float
    roles: tuple = ROLE_NAMES

    @classmethod
    def at(cls, J: float, Jp: float, U: float) -> Couplings:
        return cls(float(J), float(Jp), float(U))

    @property
    def values(self) -> tuple:
        return (self.K, self.Kp, self.Kpp)

    def permuted(self, perm) -> Couplings:
        """New slot i takes the coupling of old slot perm[i]."""
        v = self.values
        return Couplings(*(v[p] for p in perm), roles=tuple(self.roles[p] for p in perm))

    def swap(self) -> Couplings:
        return self.permuted((1, 0, 2))

    def negated(self, slots) -> Couplings:
        v = list(self.values)
        roles = list(self.roles)
        for i in slots:
            v[i] = -v[i]
            roles[i] = roles[i][1:] if roles[i].startswith("-") else "-" + roles[i]
        return Couplings(*v, roles=tuple(roles))

    def flip_first_odd(self) -> Couplings:
        """Couplings seen after flipping the odd spins of the first layer."""
        return self.negated((0, 2))

    def original(self) -> tuple:
        """Recover (J, J', U)."""
        out = {}
        for val, role in zip(self.values, self.roles):
            name = role.lstrip("-")
            out[name] = -val if role.startswith("-") else val
        return tuple(out[n] for n in ROLE_NAMES)

    def __str__(self):
        return f"K={self.K:g} K'={self.Kp:g} K''={self.Kpp:g}"


def as_couplings(c) -> Couplings:
    return c if isinstance(c, Couplings) else Couplings(*map(float, c))


def edge_probabilities(c) -> tuple:
    """(p1, p2): opening probabilities on edges where only the second layer
    disagrees, and where both layers agree."""
    c = as_couplings(c)
    return -math.expm1(-2 * (c.K - c.Kpp)), -math.expm1(-2 * (c.K + c.Kpp))


def gat_weights(c) -> tuple:
    c = as_couplings(c)
    if c.K + c.Kpp == 0:
        raise DegenerateBranch("K + K'' = 0")
    w1 = math.expm1(2 * (c.K + c.Kpp))
    w2 = math.exp(2 * (c.Kpp - c.Kp))
    w3 = math.exp(2 * (c.Kpp - c.Kp)) * math.expm1(2 * (c.K - c.Kpp)) / w1
    return w1, w2, w3


def log_gat_weights(c) -> tuple:
    """Logs of (w1, w2, w3); log w3 is -inf when K = K''."""
    c = as_couplings(c)
    if c.K + c.Kpp <= 0:
        raise DegenerateBranch("log weights need K + K'' > 0")
    lw1 = log_expm1(2 * (c.K + c.Kpp))
    lw2 = 2 * (c.Kpp - c.Kp)
    lw3 = lw2 + log_expm1(2 * (c.K - c.Kpp)) - lw1 if c.K != c.Kpp else -math.inf
    return lw1, lw2, lw3


def atrc_weights(c) -> tuple:
    """(u1, u2, u3, û3); û3 is None when u1 = 0."""
    c = as_couplings(c)
    u1 = math.expm1(2 * (c.K - c.Kpp))
    u2 = math.expm1(2 * (c.Kp - c.Kpp))
    u3 = u1 * u2 - math.exp(2 * (c.K + c.Kp)) * math.expm1(-4 * c.Kpp)
    hat = u3 / (u1 * u1) if u1 != 0 else None
    return u1, u2, u3, hat


def eight_vertex_weights(c) -> tuple:
    c = as_couplings(c)
    damp = math.exp(-2 * c.Kp)
    a = math.expm1(2 * (c.K + c.Kpp))
    b = damp * (math.exp(2 * c.K) + math.exp(2 * c.Kpp))
    cc = math.exp(2 * (c.K + c.Kpp)) + 1
    d = damp * math.exp(2 * c.Kpp) * math.expm1(2 * (c.K - c.Kpp))
    return a, b, cc, d


def log_eight_vertex_weights(c) -> tuple:
    c = as_couplings(c)
    la = log_expm1(2 * (c.K + c.Kpp))
    lb = -2 * c.Kp + np.logaddexp(2 * c.K, 2 * c.Kpp)
    lc = float(np.logaddexp(2 * (c.K + c.Kpp), 0.0))
    ld = -2 * c.Kp + 2 * c.Kpp + log_expm1(2 * (c.K - c.Kpp)) if c.K != c.Kpp else -math.inf
    return la, float(lb), lc, ld


def six_vertex_ratios(J: float, U: float) -> tuple:
    """(a/c, b/c) on the six-vertex side K = K'' = J, K' = U."""
    return math.tanh(2 * J), math.exp(-2 * U) / math.cosh(2 * J)


def six_vertex_params(a_over_c: float, b_over_c: float) -> tuple:
    """Inverse of :func:`six_vertex_ratios`; needs 0 <= a/c < 1 and b/c > 0."""
    if not 0 <= a_over_c < 1 or b_over_c <= 0:
        raise ValueError("need 0 <= a/c < 1 and b/c > 0")
    J = 0.5 * math.atanh(a_over_c)
    U = -0.5 * math.log(b_over_c * math.cosh(2 * J))
    return J, U


def is_non_staggered(a: float, b: float, tol: float = 1e-12) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def af_fkg(J, Jp, U) -> bool:
    return min(J, Jp) > 0 > U and math.tanh(U) >= -math.tanh(J) * math.tanh(Jp)


def iso_af_fkg(J, Jp, U) -> bool:
    return J == Jp and J > 0 > U and math.cosh(2 * J) >= math.exp(-2 * U)


def gat_fkg(c) -> bool:
    c = as_couplings(c)
    return (c.Kp >= c.Kpp and c.K >= c.Kpp and c.K > -c.Kpp
            and math.tanh(c.Kpp) >= -math.tanh(c.K) * math.tanh(c.Kp))


def self_dual(J, U, tol: float = SELF_DUAL_TOL) -> bool:
    return abs(math.sinh(2 * J) - math.exp(-2 * U)) <= tol


def regime_predicates(c) -> dict:
    c = as_couplings(c)
    J, Jp, U = c.original()
    return {
        "af_fkg": af_fkg(J, Jp, U),
        "gat_fkg": gat_fkg(c),
        "iso_af_fkg": iso_af_fkg(J, Jp, U),
        "self_dual": J == Jp and self_dual(J, U),
        "sampling_valid": c.K >= abs(c.Kpp),
    }


@dataclass
class WeightSet:
    couplings: Couplings
    p1: float
    p2: float
    w: tuple | None
    u: tuple
    vertex: tuple
    flags: dict = field(default_factory=dict)


def weight_set(c) -> WeightSet:
    c = as_couplings(c)
    try:
        w = gat_weights(c)
    except DegenerateBranch:
        w = None
    p1, p2 = edge_probabilities(c)
    return WeightSet(c, p1, p2, w, atrc_weights(c), eight_vertex_weights(c), regime_predicates(c))
