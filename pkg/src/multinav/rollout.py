"""Episode engine: one scenario instance stepped synchronously with the full
perception stack (LiDAR, tracking, global paths, running targets), reward
computation and per-robot bookkeeping for metrics.

Training and benchmarking both drive NavEnv; observation building can be
switched off for controllers that consume world state directly (ORCA, the
straight-to-target baseline), which skips raycasting entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .lidar import ScanHistory, apply_lidar_noise, raycast
from .observations import (AblationConfig, NoiseConfig, build_observation,
                           normalize)
from .planner import TargetPoint, astar, rasterize, running_target
from .reward import RewardConfig, reward_terms
from .scenarios import GeneratedScenario, ScenarioSpec, generate
from .sim import V_MAX, Action, Status, World
from .tracker import Tracker, TrackerConfig


@dataclass
class EnvConfig:
    horizon: int = 5                       # running-target lookahead, waypoints
    resolution: float = 0.1
    noise: NoiseConfig = field(default_factory=NoiseConfig.disabled)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    build_observations: bool = True


@dataclass
class AgentRecord:
    """Per-robot episode bookkeeping for the benchmark metrics."""
    path_length: float = 0.0               # planned A* length, meters
    lower_bound_time: float = 0.0          # (path - goal tolerance) / v_max
    distance_traveled: float = 0.0
    travel_time: float | None = None       # sim time when the robot finished
    outcome: str = "active"


@dataclass
class StepResult:
    rewards: list                          # float per agent, None if was frozen
    reward_terms: list                     # RewardTerms per agent or None
    dones: list                            # bool per agent (this step)
    d_min: np.ndarray
    statuses: list
    targets: list                          # target used for each reward


class NavEnv:
    """One world plus its perception state. Instances are independent; run
    many in parallel for vectorized rollouts."""

    def __init__(self, spec: ScenarioSpec, env_cfg: EnvConfig | None = None,
                 seed: int = 0):
        self.spec = spec
        self.cfg = env_cfg or EnvConfig()
        self._seeds = np.random.SeedSequence(seed)
        child = self._seeds.spawn(3)
        self.lidar_rng = np.random.default_rng(child[0])
        self.state_rng = np.random.default_rng(child[1])
        self._episode_rng = np.random.default_rng(child[2])
        self.world: World | None = None
        self.scenario: GeneratedScenario | None = None

    # ---- episode lifecycle ---------------------------------------------------

    def reset(self, scenario: GeneratedScenario | None = None):
        """Start a new episode; draws a fresh scenario unless one is given."""
        if scenario is None:
            seed = int(self._episode_rng.integers(0, 2**62))
            scenario = generate(replace(self.spec, rng_seed=seed))
        self.scenario = scenario
        self.world = scenario.make_world()
        self.grid = rasterize(self.world.config, self.cfg.resolution)
        xmin, ymin, xmax, ymax = self.world.config.bounds
        self.diameter = math.hypot(xmax - xmin, ymax - ymin)
        self.paths = [astar(self.grid, s[:2], g)
                      for s, g in zip(scenario.starts, scenario.goals)]
        n = len(self.world.robots)
        self.trackers = [Tracker(self.cfg.tracker) for _ in range(n)]
        self.histories = [ScanHistory() for _ in range(n)]
        self.records = [AgentRecord(
            path_length=p.length,
            lower_bound_time=max(p.length - self.world.config.goal_tolerance, 0.0)
            / V_MAX) for p in self.paths]
        self.episode_rewards = np.zeros(n)
        self._sense()
        return self.observations()

    @property
    def n_agents(self) -> int:
        return len(self.world.robots)

    def active(self) -> list[bool]:
        return [r.status == Status.ACTIVE for r in self.world.robots]

    def target_point(self, i: int) -> TargetPoint:
        """Running target on agent i's global path (final goal under the
        no-global-path ablation)."""
        robot = self.world.robots[i]
        if self.cfg.ablation.no_global_path:
            return TargetPoint(position=robot.goal.copy(), path_direction=0.0,
                               index=-1)
        return running_target(self.paths[i], robot.position, self.cfg.horizon)

    def _sense(self) -> None:
        if not self.cfg.build_observations:
            return
        for i, robot in enumerate(self.world.robots):
            if robot.status != Status.ACTIVE:
                continue
            scan = raycast(self.world, i)
            if self.cfg.noise.lidar_sigma > 0.0:
                scan = apply_lidar_noise(scan, self.lidar_rng,
                                         self.cfg.noise.lidar_sigma)
            self.histories[i].push(scan)
            self.trackers[i].update(
                scan, (*robot.position, robot.heading), self.grid,
                self.world.config.dt)

    def observations(self):
        """Normalized observation per agent; None for frozen robots."""
        if not self.cfg.build_observations:
            return [None] * self.n_agents
        out = []
        for i, robot in enumerate(self.world.robots):
            if robot.status != Status.ACTIVE:
                out.append(None)
                continue
            bundle = build_observation(
                self.world, i, self.histories[i],
                self.trackers[i].dynamic_tracks(), self.target_point(i),
                noise_cfg=self.cfg.noise, ablation=self.cfg.ablation,
                rng=self.state_rng)
            out.append(normalize(bundle, self.diameter))
        return out

    def observation_bundle(self, i: int):
        """Un-normalized bundle for one active agent (logging support)."""
        robot = self.world.robots[i]
        return build_observation(
            self.world, i, self.histories[i], self.trackers[i].dynamic_tracks(),
            self.target_point(i), noise_cfg=self.cfg.noise,
            ablation=self.cfg.ablation, rng=self.state_rng)

    def noisy_neighbor_states(self, i: int):
        """Ground-truth neighbor (position, velocity, radius) triples with the
        evaluation noise protocol applied; the baseline controllers' feed."""
        me = self.world.robots[i]
        out = []
        for j, r in enumerate(self.world.robots):
            if j == i:
                continue
            pos = r.position.copy()
            th = r.heading
            vel = np.array([r.linear_velocity * math.cos(th),
                            r.linear_velocity * math.sin(th)])
            nc = self.cfg.noise
            if nc.position_bound > 0.0:
                pos = pos + self.state_rng.uniform(-nc.position_bound,
                                                   nc.position_bound, 2)
            if nc.velocity_bound > 0.0:
                vel = vel + self.state_rng.uniform(-nc.velocity_bound,
                                                   nc.velocity_bound, 2)
            out.append((pos, vel, r.radius))
        return out

    # ---- stepping --------------------------------------------------------

    def step(self, raw_actions) -> StepResult:
        """Advance one tick. raw_actions holds one (v, w) pair per agent
        (unclamped; entries for frozen robots are ignored)."""
        world = self.world
        was_active = self.active()
        prev_pos = [r.position.copy() for r in world.robots]
        actions = [Action(float(a[0]), float(a[1])) if was_active[i] and a is not None
                   else Action(0.0, 0.0)
                   for i, a in enumerate(raw_actions)]
        report = world.step(actions)

        rewards, terms_list, dones, targets = [], [], [], []
        for i, robot in enumerate(world.robots):
            if not was_active[i]:
                rewards.append(None)
                terms_list.append(None)
                dones.append(False)
                targets.append(None)
                continue
            target = self.target_point(i).position
            terms = reward_terms(robot.status, float(report.d_min[i]),
                                 prev_pos[i], robot.position, target,
                                 self.cfg.reward)
            rewards.append(terms.total)
            terms_list.append(terms)
            targets.append(target)
            self.episode_rewards[i] += terms.total
            done = robot.status != Status.ACTIVE
            dones.append(done)
            rec = self.records[i]
            rec.distance_traveled += float(np.hypot(*(robot.position - prev_pos[i])))
            if done:
                rec.travel_time = world.sim_time
                rec.outcome = robot.status.value
        self._sense()
        return StepResult(rewards=rewards, reward_terms=terms_list, dones=dones,
                          d_min=report.d_min, statuses=report.statuses,
                          targets=targets)

    @property
    def done(self) -> bool:
        return self.world.all_done
