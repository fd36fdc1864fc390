"""Reciprocal collision avoidance for nonholonomic disc robots.

Each neighbor induces a half-plane of permitted velocities derived from the
truncated velocity obstacle; the agent takes half the avoidance effort for
reciprocating neighbors and the full effort for static obstacles. The
feasible velocity closest to a preferred velocity is found by a randomized-
order-free incremental 2-D linear program over the disc of reachable
speeds; when the constraints are jointly infeasible a 3-D program minimizes
the worst violation while keeping obstacle constraints hard. A tracking law
maps the chosen holonomic velocity onto (v, w) commands; the disc radius is
inflated by the tracking error bound so the guarantee survives the
nonholonomic execution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Circle, Wall, closest_point_on_aabb, wrap_angle
from .sim import Action, RobotState, V_MAX, W_MAX

EPS = 1e-10


@dataclass
class OrcaConfig:
    time_horizon_agents: float = 5.0
    time_horizon_obstacles: float = 1.3
    neighbor_range: float = 3.5
    max_speed: float = V_MAX
    epsilon_tracking: float = 0.1     # radius inflation for tracking error
    heading_gain: float = 2.5         # w = clip(gain * bearing error)

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if isinstance(v, (int, float)) and v <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class HalfPlane:
    """Directed line: permitted velocities lie on the left of (point,
    direction)."""
    point: np.ndarray
    direction: np.ndarray


def _det(a, b) -> float:
    return a[0] * b[1] - a[1] * b[0]


def _orca_halfplane(rel_pos, rel_vel, combined_radius, tau, dt, responsibility):
    """Half-plane for one neighbor, RVO-style.

    rel_pos points from self to the neighbor; rel_vel is v_self - v_other.
    Already-penetrating pairs use a one-timestep horizon so the constraint
    pushes the agents apart.
    """
    dist_sq = float(rel_pos @ rel_pos)
    r_sq = combined_radius * combined_radius
    if dist_sq > r_sq:
        w = rel_vel - rel_pos / tau
        w_len_sq = float(w @ w)
        dot1 = float(w @ rel_pos)
        if dot1 < 0.0 and dot1 * dot1 > r_sq * w_len_sq:
            # project on the cut-off circle
            w_len = math.sqrt(w_len_sq)
            unit_w = w / w_len
            direction = np.array([unit_w[1], -unit_w[0]])
            u = (combined_radius / tau - w_len) * unit_w
        else:
            # project on the nearer leg of the cone
            leg = math.sqrt(dist_sq - r_sq)
            if _det(rel_pos, w) > 0.0:
                direction = np.array([rel_pos[0] * leg - rel_pos[1] * combined_radius,
                                      rel_pos[0] * combined_radius + rel_pos[1] * leg]) / dist_sq
            else:
                direction = -np.array([rel_pos[0] * leg + rel_pos[1] * combined_radius,
                                       -rel_pos[0] * combined_radius + rel_pos[1] * leg]) / dist_sq
            u = float(rel_vel @ direction) * direction - rel_vel
    else:
        # collision: push apart over a single timestep
        inv_dt = 1.0 / dt
        w = rel_vel - rel_pos * inv_dt
        w_len = math.hypot(*w)
        unit_w = w / w_len if w_len > EPS else np.array([1.0, 0.0])
        direction = np.array([unit_w[1], -unit_w[0]])
        u = (combined_radius * inv_dt - w_len) * unit_w
    return HalfPlane(point=responsibility * u, direction=direction), u


def _lp1(lines, line_no, radius, opt_velocity, direction_opt, result):
    """Optimize along one line, respecting earlier lines and the speed disc.
    Returns the new point or None when infeasible."""
    p, d = lines[line_no].point, lines[line_no].direction
    dot = float(p @ d)
    disc = dot * dot + radius * radius - float(p @ p)
    if disc < 0.0:
        return None
    sq = math.sqrt(disc)
    t_left, t_right = -dot - sq, -dot + sq
    for i in range(line_no):
        den = _det(d, lines[i].direction)
        num = _det(lines[i].direction, p - lines[i].point)
        if abs(den) <= EPS:
            if num < 0.0:
                return None
            continue
        t = num / den
        if den >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None
    if direction_opt:
        t = t_right if float(opt_velocity @ d) > 0.0 else t_left
    else:
        t = min(max(float(d @ (opt_velocity - p)), t_left), t_right)
    return p + t * d


def _lp2(lines, radius, opt_velocity, direction_opt):
    """Feasible velocity closest to opt_velocity inside the speed disc.
    Returns (index of first failing line or len(lines), result)."""
    if direction_opt:
        result = opt_velocity * radius
    elif float(opt_velocity @ opt_velocity) > radius * radius:
        result = opt_velocity / math.hypot(*opt_velocity) * radius
    else:
        result = opt_velocity.copy()
    for i, line in enumerate(lines):
        if _det(line.direction, line.point - result) > 0.0:
            new = _lp1(lines, i, radius, opt_velocity, direction_opt, result)
            if new is None:
                return i, result
            result = new
    return len(lines), result


def _lp3(lines, num_obst_lines, begin_line, radius, result):
    """Infeasible fallback: minimize the maximum violation over the agent
    lines while keeping obstacle lines hard."""
    distance = 0.0
    for i in range(begin_line, len(lines)):
        if _det(lines[i].direction, lines[i].point - result) > distance:
            proj = list(lines[:num_obst_lines])
            for j in range(num_obst_lines, i):
                den = _det(lines[i].direction, lines[j].direction)
                if abs(den) <= EPS:
                    if float(lines[i].direction @ lines[j].direction) > 0.0:
                        continue
                    point = 0.5 * (lines[i].point + lines[j].point)
                else:
                    t = _det(lines[j].direction,
                             lines[i].point - lines[j].point) / den
                    point = lines[i].point + t * lines[i].direction
                direction = lines[j].direction - lines[i].direction
                direction = direction / math.hypot(*direction)
                proj.append(HalfPlane(point, direction))
            opt = np.array([-lines[i].direction[1], lines[i].direction[0]])
            fail, new = _lp2(proj, radius, opt, True)
            if fail == len(proj):
                result = new
            distance = _det(lines[i].direction, lines[i].point - result)
    return result


def orca_velocity(self_pos: np.ndarray, self_vel: np.ndarray, radius: float,
                  neighbor_states, circles: list[Circle], walls: list[Wall],
                  preferred_velocity: np.ndarray, cfg: OrcaConfig,
                  dt: float = 0.1):
    """Collision-avoiding holonomic velocity closest to the preferred one.

    neighbor_states is a list of (position, velocity, radius) triples (the
    baseline sees ground-truth neighbor states, optionally noise-perturbed
    upstream). Returns (velocity, feasible) where feasible is False when the
    3-D fallback had to relax agent constraints.

    Agent pairs are inflated by 2x the tracking error bound (both robots
    deviate from their holonomic tracks); static obstacles are exactly
    mapped and use the raw radius.
    """
    lines: list[HalfPlane] = []

    # static obstacles first: they stay hard in the infeasible fallback
    statics = []
    for c in circles:
        statics.append((c.center, c.r))
    for w in walls:
        q = closest_point_on_aabb(self_pos, w.aabb)
        statics.append((q, 0.0))
    for q, r_obs in statics:
        rel_pos = np.asarray(q, dtype=float) - self_pos
        if float(rel_pos @ rel_pos) > (cfg.neighbor_range + r_obs) ** 2:
            continue
        hp, u = _orca_halfplane(rel_pos, self_vel, radius + r_obs,
                                cfg.time_horizon_obstacles, dt,
                                responsibility=1.0)
        lines.append(HalfPlane(self_vel + hp.point, hp.direction))
    num_obst = len(lines)

    for pos, vel, r_other in neighbor_states:
        rel_pos = np.asarray(pos, dtype=float) - self_pos
        if float(rel_pos @ rel_pos) > cfg.neighbor_range ** 2:
            continue
        rel_vel = self_vel - np.asarray(vel, dtype=float)
        hp, u = _orca_halfplane(rel_pos, rel_vel,
                                radius + r_other + 2.0 * cfg.epsilon_tracking,
                                cfg.time_horizon_agents, dt, responsibility=0.5)
        lines.append(HalfPlane(self_vel + hp.point, hp.direction))

    fail, result = _lp2(lines, cfg.max_speed, np.asarray(preferred_velocity,
                                                         dtype=float), False)
    if fail < len(lines):
        result = _lp3(lines, num_obst, fail, cfg.max_speed, result)
        return result, False
    return result, True


def nh_track(desired: np.ndarray, state: RobotState,
             cfg: OrcaConfig | None = None) -> Action:
    """Map a holonomic velocity to (v, w) for a differential-drive robot.

    Turn rate proportional to the bearing error, forward speed scaled by its
    cosine (zero when the target direction is behind), so the executed arc
    stays within the tracking error bound the radii were inflated by.
    """
    cfg = cfg or OrcaConfig()
    speed = math.hypot(*desired)
    if speed < 1e-9:
        return Action(0.0, 0.0)
    alpha = wrap_angle(math.atan2(desired[1], desired[0]) - state.heading)
    w = min(max(cfg.heading_gain * alpha, -W_MAX), W_MAX)
    v = min(max(speed * math.cos(alpha), 0.0), V_MAX)
    return Action(v, w)


def preferred_velocity(position: np.ndarray, target: np.ndarray,
                       max_speed: float = V_MAX,
                       goal_distance: float | None = None) -> np.ndarray:
    """Full speed toward the target, slowing inside one meter of the goal.

    The target is usually a running point just ahead on the global path;
    pass goal_distance so the slow-down keys on the actual goal instead of
    the perpetually-near target.
    """
    to_target = np.asarray(target, dtype=float) - position
    dist = math.hypot(*to_target)
    if dist < 1e-9:
        return np.zeros(2)
    brake = dist if goal_distance is None else goal_distance
    speed = max_speed * min(brake, 1.0)
    return to_target / dist * speed
