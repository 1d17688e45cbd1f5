"""Single-player Pong against a solid wall.

The field spans ``[0, n_columns]`` horizontally and ``[0, field_height]``
vertically. The paddle row is ``y = 0``; the side walls and the top wall
reflect the ball specularly. The paddle slides along ``y = 0`` toward its
commanded target at constant speed.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping, Sequence

from .exceptions import ParameterError


@dataclass(frozen=True)
class FieldConfig:
    """Field geometry and kinematics.

    ``ball_speed`` is the per-step displacement along each axis at launch
    (``launch_slope`` scales the horizontal component), so the default launch
    is a 45 degree diagonal.
    """

    n_columns: int = 32
    field_height: float = 32.0
    ball_speed: float = 1.0
    paddle_speed: float = 1.0
    paddle_halfwidth: float = 1.0
    launch_slope: float = 1.0

    def __post_init__(self):
        if self.n_columns < 2:
            raise ParameterError("n_columns must be >= 2")
        if self.ball_speed <= 0 or self.paddle_speed <= 0:
            raise ParameterError("speeds must be positive")
        if not 0 <= self.paddle_halfwidth < self.n_columns:
            raise ParameterError("paddle_halfwidth must lie in [0, n_columns)")
        if self.field_height <= 0 or self.launch_slope < 0:
            raise ParameterError("field_height must be positive, launch_slope >= 0")

    @property
    def column_width(self) -> float:
        return 1.0


@dataclass(frozen=True)
class GameState:
    ball_x: float
    ball_y: float
    ball_vx: float
    ball_vy: float
    paddle_x: float
    paddle_target_x: float

    @property
    def ball_arrived(self) -> bool:
        return self.ball_y <= 0.0


@dataclass(frozen=True)
class RewardSchedule:
    halfwidth: int = 1

    def __post_init__(self):
        if self.halfwidth < 1:
            raise ParameterError("reward halfwidth must be >= 1")


def launch(column: int, cfg: FieldConfig, direction: int = 1) -> GameState:
    """Ball at the top of ``column`` heading down; paddle parked mid-field."""
    if not 0 <= column < cfg.n_columns:
        raise ParameterError(f"column {column} out of range")
    centre = cfg.n_columns / 2.0
    return GameState(
        ball_x=column + 0.5, ball_y=float(cfg.field_height),
        ball_vx=direction * cfg.launch_slope * cfg.ball_speed, ball_vy=-cfg.ball_speed,
        paddle_x=centre, paddle_target_x=centre)


def discretize_ball(state: GameState, n_columns: int) -> int:
    col = math.floor(state.ball_x)
    return min(max(col, 0), n_columns - 1)


def _fold(x: float, v: float, hi: float) -> tuple[float, float]:
    # reflect x into [0, hi]; loops for displacements longer than the field
    while x < 0 or x > hi:
        if x < 0:
            x, v = -x, -v
        else:
            x, v = 2 * hi - x, -v
    return x, v


def _policy_lookup(policy) -> Callable[[int], int]:
    if callable(policy):
        return policy
    if isinstance(policy, Mapping):
        return lambda c: int(policy[c])
    table = [int(a) for a in policy]
    return lambda c: table[c]


def step_game(state: GameState, cfg: FieldConfig, dt_steps: int = 1,
              policy=None) -> GameState:
    """Advance ``dt_steps`` steps.

    Per step the ball moves first. If ``policy`` (column -> column) is given,
    the paddle target is then reset to the centre of the column it picks for
    the ball's new column. Finally the paddle moves toward its target by at
    most ``paddle_speed``, never past it. A ball reaching the paddle row stops
    there with ``ball_y == 0``; later steps move only the paddle.
    """
    act = _policy_lookup(policy) if policy is not None else None
    s = state
    for _ in range(dt_steps):
        x, y, vx, vy = s.ball_x, s.ball_y, s.ball_vx, s.ball_vy
        if y > 0:
            frac = 1.0
            if vy < 0 and y + vy < 0:
                frac = y / -vy
            x, vx = _fold(x + frac * vx, vx, float(cfg.n_columns))
            y, vy = _fold(y + frac * vy, vy, float(cfg.field_height))
            if frac < 1.0:
                y = 0.0
        target = s.paddle_target_x
        if act is not None:
            target = act(discretize_ball(GameState(x, y, vx, vy, 0.0, 0.0), cfg.n_columns)) + 0.5
        d = target - s.paddle_x
        px = target if abs(d) <= cfg.paddle_speed else s.paddle_x + math.copysign(cfg.paddle_speed, d)
        px = min(max(px, 0.0), float(cfg.n_columns))
        s = GameState(x, y, vx, vy, px, target)
    return s


def is_catch(state: GameState, cfg: FieldConfig) -> bool:
    return abs(state.paddle_x - state.ball_x) <= cfg.paddle_halfwidth + 0.5


def compute_reward(ball_column: int, action_column: int,
                   schedule: RewardSchedule = RewardSchedule()) -> float:
    """1 when aiming at the ball's column, falling linearly to 0 at ``halfwidth + 1`` columns."""
    if ball_column < 0 or action_column < 0:
        raise ParameterError("column indices must be non-negative")
    return max(0.0, 1.0 - abs(action_column - ball_column) / (schedule.halfwidth + 1))


def play(policy, start_column: int, cfg: FieldConfig, direction: int = 1,
         max_steps: int | None = None) -> list[GameState]:
    """Play one ball with the paddle commanded by ``policy`` (column -> column).

    Returns the visited states, launch state first, arrival state last.
    """
    act = _policy_lookup(policy)
    s = launch(start_column, cfg, direction)
    s = replace(s, paddle_target_x=act(start_column) + 0.5)
    states = [s]
    if max_steps is None:
        # generous bound: vertical travel may involve top-wall bounces
        max_steps = int(math.ceil(4 * cfg.field_height / cfg.ball_speed)) + 1
    for _ in range(max_steps):
        s = step_game(s, cfg, policy=act)
        states.append(s)
        if s.ball_arrived:
            break
    return states


def evaluate_catch_fraction(policy, cfg: FieldConfig = FieldConfig(), direction: int = 1) -> float:
    """Fraction of the ``n_columns`` launch columns whose ball the paddle catches."""
    catches = 0
    for c in range(cfg.n_columns):
        final = play(policy, c, cfg, direction)[-1]
        catches += final.ball_arrived and is_catch(final, cfg)
    return catches / cfg.n_columns


def mirror_policy(policy: Sequence[int], n_columns: int) -> list[int]:
    return [n_columns - 1 - int(policy[n_columns - 1 - c]) for c in range(n_columns)]


def write_game_trace(path, states: Iterable[GameState]) -> None:
    """CSV rows ``step, ball_x, ball_y, paddle_x, target_x``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "ball_x", "ball_y", "paddle_x", "target_x"])
        for k, s in enumerate(states):
            writer.writerow([k, repr(s.ball_x), repr(s.ball_y), repr(s.paddle_x), repr(s.paddle_target_x)])
