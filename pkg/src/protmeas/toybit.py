"""A ball-in-a-box toy bit with a continuously coupled classical pointer.

The ontic state is ``(x, y)`` with ``x, y`` in {+1, -1}. A strong X
measurement reads ``x`` and randomizes ``y``; a strong Y measurement does the
converse. Epistemic states are probability 4-vectors ordered
``(p++, p+-, p-+, p--)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

Axis = Literal["X", "Y"]
ONTIC_STATES = ((1, 1), (1, -1), (-1, 1), (-1, -1))
_X_VALUES = np.array([1, 1, -1, -1])
_Y_VALUES = np.array([1, -1, 1, -1])


def _axis(which: str) -> str:
    w = str(which).upper()
    if w not in ("X", "Y"):
        raise ValueError(f"axis must be 'X' or 'Y', got {which!r}")
    return w


def _sign(sign) -> int:
    if sign in ("+", 1, "+1"):
        return 1
    if sign in ("-", -1, "-1"):
        return -1
    raise ValueError(f"sign must be + or -, got {sign!r}")


@dataclass(frozen=True)
class OnticState:
    x: int
    y: int

    def __post_init__(self):
        if self.x not in (1, -1) or self.y not in (1, -1):
            raise ValueError("ontic coordinates must be +1 or -1")

    @property
    def index(self) -> int:
        return ONTIC_STATES.index((self.x, self.y))

    def coordinate(self, which: Axis) -> int:
        return self.x if _axis(which) == "X" else self.y


@dataclass(frozen=True, eq=False)
class EpistemicState:
    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(-1)
        if p.shape != (4,) or p.min() < 0 or abs(p.sum() - 1) > 1e-12:
            raise ValueError(f"not a probability 4-vector: {p}")
        p.flags.writeable = False
        object.__setattr__(self, "p", p)

    def expectation(self, which: Axis) -> float:
        return float(self.p @ (_X_VALUES if _axis(which) == "X" else _Y_VALUES))

    def sample(self, rng: np.random.Generator, size: int | None = None):
        idx = rng.choice(4, size=size, p=self.p)
        if size is None:
            return OnticState(*ONTIC_STATES[idx])
        return idx


def prepare(which: Axis, sign) -> EpistemicState:
    """``p^{x+} = (1/2, 1/2, 0, 0)`` and its three analogues."""
    values = _X_VALUES if _axis(which) == "X" else _Y_VALUES
    p = (values == _sign(sign)).astype(float) / 2
    return EpistemicState(p)


PREPARATIONS = {f"{a.lower()}{s}": prepare(a, s) for a in ("X", "Y") for s in ("+", "-")}


def strong_measure(ontic: OnticState, which: Axis, rng: np.random.Generator) -> tuple[int, OnticState]:
    """Read the measured coordinate and resample the other uniformly."""
    fresh = 1 if rng.random() < 0.5 else -1
    if _axis(which) == "X":
        return ontic.x, OnticState(ontic.x, fresh)
    return ontic.y, OnticState(fresh, ontic.y)


def expectation_table() -> list[tuple[str, float, float]]:
    """Rows ``(state, <X>, <Y>)`` computed from the four preparations."""
    return [(name, p.expectation("X"), p.expectation("Y")) for name, p in PREPARATIONS.items()]


def backaction_evolve(p: EpistemicState, r_rate: float, t: float, which: Axis) -> EpistemicState:
    """Markovian flips of the coordinate *not* being measured, at rate ``r_rate``.

    Each pair of states differing only in that coordinate relaxes as
    ``p_a(t) = [p_a(0)(1 + e^{-2rt}) + p_b(0)(1 - e^{-2rt})] / 2``.
    """
    if r_rate < 0 or t < 0:
        raise ValueError("rate and time must be non-negative")
    e = np.exp(-2 * r_rate * t)
    move = (1 - e) / 2
    q = p.p
    partner = [1, 0, 3, 2] if _axis(which) == "X" else [2, 3, 0, 1]
    # written as a correction so that stationary states come back bitwise
    return EpistemicState(q + move * (q[partner] - q))


def backaction_generator(which: Axis) -> np.ndarray:
    """Rate matrix ``G`` (per unit ``r``) with ``dp/dt = r G p``."""
    partner = [1, 0, 3, 2] if _axis(which) == "X" else [2, 3, 0, 1]
    g = -np.eye(4)
    for a, b in enumerate(partner):
        g[a, b] = 1.0
    return g


def success_probability(N: int, g: float, r_rate: float) -> float:
    """``[(1 + exp(-2 r / (g N))) / 2]^N``, evaluated in the log domain."""
    if N < 1 or g <= 0 or r_rate < 0:
        raise ValueError("need N >= 1, g > 0, r >= 0")
    return float(np.exp(N * np.log1p(np.expm1(-2 * r_rate / (g * N)) / 2)))


# --------------------------------------------------------------------------
# protected runs


@dataclass(frozen=True)
class ToyRunConfig:
    """One protected measurement. ``dt = 1/(g N)`` is derived."""

    N: int
    g: float = 1.0
    r_rate: float = 0.0
    protect: Axis = "X"
    measure: Axis = "X"
    backaction_enabled: bool = False

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if not self.g > 0 or self.r_rate < 0:
            raise ValueError("need g > 0 and r_rate >= 0")
        object.__setattr__(self, "protect", _axis(self.protect))
        object.__setattr__(self, "measure", _axis(self.measure))

    @property
    def dt(self) -> float:
        return 1.0 / (self.g * self.N)

    @property
    def flip_probability(self) -> float:
        """Chance that back-action flips the unmeasured coordinate within one ``dt``."""
        if not self.backaction_enabled:
            return 0.0
        return float(-np.expm1(-2 * self.r_rate * self.dt) / 2)


@dataclass(frozen=True, eq=False)
class ToyRunResult:
    success: bool
    final_Q: float
    pointer_path: np.ndarray | None = None
    ontic_path: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class ToyEnsemble:
    """Vectorized outcome of many independent runs."""

    success: np.ndarray
    final_Q: np.ndarray
    after_protection: np.ndarray | None = None

    @property
    def success_frequency(self) -> float:
        return float(self.success.mean())


def protected_ensemble(
    config: ToyRunConfig,
    initial: EpistemicState,
    runs: int,
    rng: np.random.Generator,
    record_ontic: bool = False,
    order: tuple[str, ...] = ("drift", "backaction", "protect"),
) -> ToyEnsemble:
    """Run ``runs`` independent protected measurements side by side.

    Protection is applied at ``t_0 = 0`` first. Each of the ``N`` rounds then
    drifts the pointer by ``(coupled coordinate)/N``, applies a back-action
    flip of the coordinate the pointer does not read, and measures the
    protected coordinate strongly. A run succeeds when every protection
    outcome agrees. ``order`` permutes the steps within a round.

    With ``record_ontic`` the ontic indices right after each protection are
    returned, shape ``(N + 1, runs)``.
    """
    if sorted(order) != ["backaction", "drift", "protect"]:
        raise ValueError("order must be a permutation of drift, backaction, protect")
    N = config.N
    idx = initial.sample(rng, size=runs)
    x = _X_VALUES[idx].copy()
    y = _Y_VALUES[idx].copy()
    pro_is_x = config.protect == "X"
    meas_is_x = config.measure == "X"
    q_flip = config.flip_probability

    def protect():
        fresh = np.where(rng.random(runs) < 0.5, 1, -1)
        if pro_is_x:
            y[:] = fresh
            return x.copy()
        x[:] = fresh
        return y.copy()

    trail = np.empty((N + 1, runs), dtype=np.int8) if record_ontic else None
    first = protect()
    success = np.ones(runs, dtype=bool)
    if record_ontic:
        trail[0] = 2 * (x == -1) + (y == -1)
    steps = np.zeros(runs, dtype=np.int64)
    for n in range(1, N + 1):
        for step in order:
            if step == "drift":
                steps += x if meas_is_x else y
            elif step == "backaction":
                if q_flip > 0:
                    flip = rng.random(runs) < q_flip
                    target = y if meas_is_x else x
                    target[flip] *= -1
            else:
                success &= protect() == first
        if record_ontic:
            trail[n] = 2 * (x == -1) + (y == -1)
    return ToyEnsemble(success, steps / N, trail)


def protected_run(
    config: ToyRunConfig,
    initial: EpistemicState,
    rng: np.random.Generator,
    record_path: bool = False,
) -> ToyRunResult:
    """A single run, optionally keeping the pointer positions ``Q_n`` and ontic states."""
    ontic = initial.sample(rng)
    first, ontic = strong_measure(ontic, config.protect, rng)
    success = True
    q_flip = config.flip_probability
    steps = 0
    pointer = [0.0] if record_path else None
    states = [ontic.index] if record_path else None
    for _ in range(config.N):
        steps += ontic.coordinate(config.measure)
        if q_flip > 0 and rng.random() < q_flip:
            if config.measure == "X":
                ontic = OnticState(ontic.x, -ontic.y)
            else:
                ontic = OnticState(-ontic.x, ontic.y)
        outcome, ontic = strong_measure(ontic, config.protect, rng)
        success &= outcome == first
        if record_path:
            pointer.append(steps / config.N)
            states.append(ontic.index)
    return ToyRunResult(
        bool(success),
        steps / config.N,
        np.array(pointer) if record_path else None,
        np.array(states) if record_path else None,
    )
