"""Exact two-level state algebra in Bloch form.

A (possibly unnormalized) qubit density operator is stored as four real
numbers, rho = (w*I + x*sx + y*sy + z*sz)/2, where w is the trace.  Every
superoperator used in this package closes on these four numbers, which makes
states cheap to copy, trivially positivity-checkable (x^2+y^2+z^2 <= w^2)
and safe to use from concurrent code: all operations below are pure
functions.

Conventions: sz|e> = +|e>, sigma_minus = |g><e|, and |+/-> are the
sigma_x eigenstates, sx|+/-> = +/-|+/->.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

__all__ = [
    "BlochState",
    "JumpKind",
    "JumpOperator",
    "SteeringFunctionals",
    "PositivityError",
    "DegenerateStateError",
    "steering_functionals",
    "apply_jump",
    "normalize",
    "check_positivity",
    "MIXED",
    "GROUND",
    "PLUS",
    "MINUS",
]

# A state is accepted as positive if |r| <= w*(1 + POSITIVITY_TOL); overshoot
# below CLAMP_LIMIT is treated as integrator roundoff and clamped back onto
# the Bloch ball, anything larger is a bug or a step-size problem.
POSITIVITY_TOL = 1e-9
CLAMP_LIMIT = 1e-6

NORMALIZATION_TOL = 1e-9


class PositivityError(ValueError):
    """Bloch vector exceeds the trace ball by more than the clamp limit."""


class DegenerateStateError(ValueError):
    """Operation on a state with non-positive trace."""


@dataclass(frozen=True)
class BlochState:
    """Unnormalized qubit state rho = (w*I + x*sx + y*sy + z*sz)/2."""

    w: float
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def bloch_norm(self) -> float:
        return math.sqrt(self.x**2 + self.y**2 + self.z**2)

    def is_normalized(self, tol: float = NORMALIZATION_TOL) -> bool:
        return abs(self.w - 1.0) <= tol

    def expect(self) -> tuple[float, float, float]:
        """(<sx>, <sy>, <sz>) of the normalized state."""
        if self.w <= 0.0:
            raise DegenerateStateError(f"trace {self.w} <= 0")
        return (self.x / self.w, self.y / self.w, self.z / self.w)

    def scaled(self, factor: float) -> "BlochState":
        return BlochState(self.w * factor, self.x * factor,
                          self.y * factor, self.z * factor)


MIXED = BlochState(1.0)
GROUND = BlochState(1.0, z=-1.0)
PLUS = BlochState(1.0, x=1.0)
MINUS = BlochState(1.0, x=-1.0)


class JumpKind(enum.Enum):
    """Jump operators of the spectrally resolved fluorescence channels."""

    LOWER_PLUS_MINUS = "lower_plus_minus"    # |-><+|
    LOWER_MINUS_PLUS = "lower_minus_plus"    # |+><-|
    SIGMA_X = "sigma_x"
    PROJECTOR_PLUS = "projector_plus"        # sx + 1 = 2|+><+|
    PROJECTOR_MINUS = "projector_minus"      # sx - 1 = -2|-><-|
    SIGMA_MINUS = "sigma_minus"              # |g><e|


@dataclass(frozen=True)
class JumpOperator:
    kind: JumpKind
    scale: float = 1.0


@dataclass(frozen=True)
class SteeringFunctionals:
    """f1 = <sx>^2 and f2 = <sy>^2 + <sz>^2 of a normalized state.

    For any valid qubit state f1 + f2 <= 1; both are convex under mixing,
    which is what makes them usable in a steering inequality.
    """

    f1: float
    f2: float


def check_positivity(state: BlochState,
                     clamp_limit: float = CLAMP_LIMIT) -> BlochState:
    """Validate x^2+y^2+z^2 <= w^2, clamping small overshoot.

    Overshoot below ``clamp_limit`` (relative to the trace) is rescaled back
    onto the ball; larger overshoot raises :class:`PositivityError`.
    """
    if state.w < 0.0:
        raise PositivityError(f"negative trace {state.w}")
    r = state.bloch_norm()
    if r <= state.w:
        return state
    scale = max(state.w, 1.0)
    if r - state.w > clamp_limit * scale:
        raise PositivityError(
            f"Bloch norm {r} exceeds trace {state.w} beyond clamp limit")
    f = state.w / r
    return BlochState(state.w, state.x * f, state.y * f, state.z * f)


def steering_functionals(state: BlochState) -> SteeringFunctionals:
    """Compute (f1, f2) for a normalized state.

    Rejects unnormalized input; callers holding an unnormalized state should
    :func:`normalize` first so the weight is accounted for explicitly.
    """
    if not state.is_normalized():
        raise ValueError(f"state not normalized: trace {state.w}")
    check_positivity(state)
    return SteeringFunctionals(f1=state.x**2, f2=state.y**2 + state.z**2)


def normalize(state: BlochState) -> tuple[BlochState, float]:
    """Return (state / trace, trace).  Raises on non-positive trace."""
    if state.w <= 0.0:
        raise DegenerateStateError(f"cannot normalize state with trace {state.w}")
    inv = 1.0 / state.w
    out = BlochState(1.0, state.x * inv, state.y * inv, state.z * inv)
    return check_positivity(out), state.w


def apply_jump(state: BlochState, op: JumpOperator) -> BlochState:
    """Unnormalized post-jump state scale^2 * c rho c^dagger.

    The output trace is scale^2 * Tr[c^dagger c rho]; a zero trace is legal
    and simply flags a jump that cannot occur from this state.
    """
    w, x, y, z = state.w, state.x, state.y, state.z
    k = op.kind
    if k is JumpKind.LOWER_PLUS_MINUS:
        p = 0.5 * (w + x)                       # <+|rho|+>
        out = BlochState(p, -p, 0.0, 0.0)
    elif k is JumpKind.LOWER_MINUS_PLUS:
        p = 0.5 * (w - x)
        out = BlochState(p, p, 0.0, 0.0)
    elif k is JumpKind.SIGMA_X:
        out = BlochState(w, x, -y, -z)
    elif k is JumpKind.PROJECTOR_PLUS:
        p = 2.0 * (w + x)                       # (sx+1) rho (sx+1) = 4 pi+ rho pi+
        out = BlochState(p, p, 0.0, 0.0)
    elif k is JumpKind.PROJECTOR_MINUS:
        p = 2.0 * (w - x)
        out = BlochState(p, -p, 0.0, 0.0)
    elif k is JumpKind.SIGMA_MINUS:
        p = 0.5 * (w + z)                       # <e|rho|e>
        out = BlochState(p, 0.0, 0.0, -p)
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown jump kind {k}")
    s2 = op.scale * op.scale
    if s2 != 1.0:
        out = out.scaled(s2)
    return check_positivity(out)
