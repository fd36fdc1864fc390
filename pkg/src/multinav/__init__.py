"""Deterministic 2D multi-robot navigation.

A seedable disc-robot simulator with differential-drive kinematics, a
simulated 360-degree LiDAR, model-free dynamic-obstacle tracking, A* global
paths with a running-target lookahead, a graph-attentive PPO navigation
policy, an ORCA baseline for nonholonomic robots, parametric training and
evaluation scenarios, and a four-metric benchmark harness.
"""

from .geometry import Circle, Wall, wrap_angle
from .sim import (Action, ActionArity, NonFiniteAction, RobotState, Status,
                  StepReport, World, WorldConfig, clamp_action, integrate)
from .lidar import LidarScan, ScanHistory, apply_lidar_noise, raycast
from .planner import (EmptyPath, GlobalPath, InvalidEndpoint, OccupancyGrid,
                      TargetPoint, Unreachable, astar, rasterize, running_target)
from .tracker import Cluster, ClusterTrack, TrackClass, Tracker, TrackerConfig
from .observations import (AblationConfig, NeighborGraph, NoiseConfig,
                           ObservationBundle, apply_state_noise,
                           build_observation, denormalize, normalize)
from .reward import RewardConfig, progress_reward, reward_terms, social_penalty, step_reward
from .policy import (ActionDistribution, ActorCritic, NumericalDivergence,
                     PolicyConfig, deterministic_action, sample_action)

__version__ = "0.1.0"
