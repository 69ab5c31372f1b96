"""Shortest Dubins paths between planar poses with a minimum turning radius.

Classic six-word construction (LSL, RSR, LSR, RSL, RLR, LRL) in normalized
coordinates, used as the steering function of the optimizing tree planner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .geom import Pose2

_TWO_PI = 2.0 * math.pi


def _mod2pi(theta: float) -> float:
    return theta % _TWO_PI


def _lsl(alpha: float, beta: float, d: float) -> Optional[tuple[float, float, float]]:
    tmp0 = d + math.sin(alpha) - math.sin(beta)
    p_sq = 2 + d * d - 2 * math.cos(alpha - beta) + 2 * d * (math.sin(alpha) - math.sin(beta))
    if p_sq < 0:
        return None
    tmp1 = math.atan2(math.cos(beta) - math.cos(alpha), tmp0)
    return (_mod2pi(-alpha + tmp1), math.sqrt(p_sq), _mod2pi(beta - tmp1))


def _rsr(alpha: float, beta: float, d: float) -> Optional[tuple[float, float, float]]:
    tmp0 = d - math.sin(alpha) + math.sin(beta)
    p_sq = 2 + d * d - 2 * math.cos(alpha - beta) + 2 * d * (math.sin(beta) - math.sin(alpha))
    if p_sq < 0:
        return None
    tmp1 = math.atan2(math.cos(alpha) - math.cos(beta), tmp0)
    return (_mod2pi(alpha - tmp1), math.sqrt(p_sq), _mod2pi(-beta + tmp1))


def _lsr(alpha: float, beta: float, d: float) -> Optional[tuple[float, float, float]]:
    p_sq = -2 + d * d + 2 * math.cos(alpha - beta) + 2 * d * (math.sin(alpha) + math.sin(beta))
    if p_sq < 0:
        return None
    p = math.sqrt(p_sq)
    tmp = math.atan2(-math.cos(alpha) - math.cos(beta), d + math.sin(alpha) + math.sin(beta))
    tmp -= math.atan2(-2.0, p)
    return (_mod2pi(-alpha + tmp), p, _mod2pi(-_mod2pi(beta) + tmp))


def _rsl(alpha: float, beta: float, d: float) -> Optional[tuple[float, float, float]]:
    p_sq = d * d - 2 + 2 * math.cos(alpha - beta) - 2 * d * (math.sin(alpha) + math.sin(beta))
    if p_sq < 0:
        return None
    p = math.sqrt(p_sq)
    tmp = math.atan2(math.cos(alpha) + math.cos(beta), d - math.sin(alpha) - math.sin(beta))
    tmp -= math.atan2(2.0, p)
    return (_mod2pi(alpha - tmp), p, _mod2pi(beta - tmp))


def _rlr(alpha: float, beta: float, d: float) -> Optional[tuple[float, float, float]]:
    tmp = (6.0 - d * d + 2 * math.cos(alpha - beta) + 2 * d * (math.sin(alpha) - math.sin(beta))) / 8.0
    if abs(tmp) > 1.0:
        return None
    p = _mod2pi(_TWO_PI - math.acos(tmp))
    t = _mod2pi(
        alpha
        - math.atan2(math.cos(alpha) - math.cos(beta), d - math.sin(alpha) + math.sin(beta))
        + _mod2pi(p / 2.0)
    )
    return (t, p, _mod2pi(alpha - beta - t + _mod2pi(p)))


def _lrl(alpha: float, beta: float, d: float) -> Optional[tuple[float, float, float]]:
    tmp = (6.0 - d * d + 2 * math.cos(alpha - beta) + 2 * d * (math.sin(beta) - math.sin(alpha))) / 8.0
    if abs(tmp) > 1.0:
        return None
    p = _mod2pi(_TWO_PI - math.acos(tmp))
    t = _mod2pi(
        -alpha
        - math.atan2(math.cos(alpha) - math.cos(beta), d + math.sin(alpha) - math.sin(beta))
        + p / 2.0
    )
    return (t, p, _mod2pi(_mod2pi(beta) - alpha - t + _mod2pi(p)))


_WORDS = (
    ("LSL", _lsl),
    ("RSR", _rsr),
    ("LSR", _lsr),
    ("RSL", _rsl),
    ("RLR", _rlr),
    ("LRL", _lrl),
)


@dataclass(frozen=True)
class DubinsPath:
    q0: Pose2
    rho: float
    word: str
    params: tuple[float, float, float]  # normalized segment lengths

    @property
    def length(self) -> float:
        return sum(self.params) * self.rho

    def sample(self, s: float) -> Pose2:
        """Pose after arclength s along the path (s clamped to [0, length])."""
        s = min(max(s, 0.0), self.length) / self.rho
        x, y, th = 0.0, 0.0, self.q0.theta
        remaining = s
        for seg_type, seg_len in zip(self.word, self.params):
            step = min(seg_len, remaining)
            if seg_type == "L":
                x += math.sin(th + step) - math.sin(th)
                y += -math.cos(th + step) + math.cos(th)
                th += step
            elif seg_type == "R":
                x += -math.sin(th - step) + math.sin(th)
                y += math.cos(th - step) - math.cos(th)
                th -= step
            else:
                x += step * math.cos(th)
                y += step * math.sin(th)
            remaining -= step
            if remaining <= 1e-12:
                break
        return Pose2(self.q0.x + x * self.rho, self.q0.y + y * self.rho, th)


def shortest_path(q0: Pose2, q1: Pose2, rho: float) -> DubinsPath:
    """Shortest Dubins path from q0 to q1 with turning radius rho > 0."""
    if rho <= 0:
        raise ValueError("turning radius must be positive")
    dx = (q1.x - q0.x) / rho
    dy = (q1.y - q0.y) / rho
    d = math.hypot(dx, dy)
    phi = math.atan2(dy, dx) if d > 1e-12 else 0.0
    alpha = _mod2pi(q0.theta - phi)
    beta = _mod2pi(q1.theta - phi)

    best: Optional[DubinsPath] = None
    for word, solver in _WORDS:
        params = solver(alpha, beta, d)
        if params is None:
            continue
        path = DubinsPath(q0, rho, word, params)
        if best is None or path.length < best.length:
            best = path
    assert best is not None  # at least one word always exists
    return best
