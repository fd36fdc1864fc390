"""Model-free detection and tracking of moving objects from raw LiDAR.

Pipeline per observer and frame: adjacent-beam clustering of scan returns,
a coarse static/dynamic split against the inflated static map, nearest-
predicted-point association refined by translation-only ICP with outlier
trimming, a velocity gate on accepted matches, and a constant-velocity
estimate smoothed by an exponential moving average. Discs make rotation
unobservable, so tracks carry linear velocity only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .lidar import BEAM_OFFSETS, LidarScan
from .planner import OccupancyGrid


class TrackClass(enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


@dataclass
class TrackerConfig:
    cluster_gap: float = 0.3          # max gap between adjacent beam hits
    gating_radius: float = 0.6        # association gate on predicted position
    v_max_gate: float = 1.5           # m/s, reject faster apparent motion
    grace_steps: int = 3              # frames a track survives unmatched
    ema_beta: float = 0.5             # weight of the newest velocity sample
    static_margin: float = 0.15       # distance to occupied cells = static
    hit_margin: float = 1e-6          # below max_range - this counts as a hit
    velocity_baseline_steps: int = 5  # frames spanned by the velocity baseline


@dataclass
class Cluster:
    points: np.ndarray               # (n, 2) world frame
    centroid: np.ndarray
    closest_point: np.ndarray        # cluster point nearest the observer


@dataclass
class ClusterTrack:
    id: int
    closest_point: np.ndarray
    velocity_estimate: np.ndarray    # (2,) m/s world frame
    age: int = 1
    classification: TrackClass = TrackClass.DYNAMIC
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    observations: int = 1
    misses: int = 0
    # (frames_ago, points) snapshots; velocity baselines span several frames
    # so beam quantization amortizes over a larger true displacement
    history: list = field(default_factory=list)


def cluster_scan(scan: LidarScan, observer_pose: tuple[float, float, float],
                 gap: float = 0.3, hit_margin: float = 1e-6) -> list[Cluster]:
    """Group scan returns into clusters by adjacency.

    Non-hits (ranges at max_range) are dropped; consecutive hit beams whose
    points are within the gap threshold join one cluster, including across
    the 119 -> 0 wrap.
    """
    x, y, heading = observer_pose
    hits = scan.ranges < scan.max_range - hit_margin
    if not hits.any():
        return []
    angles = heading + BEAM_OFFSETS
    px = x + scan.ranges * np.cos(angles)
    py = y + scan.ranges * np.sin(angles)

    groups: list[list[int]] = []
    current: list[int] = []
    for k in range(len(scan.ranges)):
        if not hits[k]:
            if current:
                groups.append(current)
                current = []
            continue
        if current:
            j = current[-1]
            if math.hypot(px[k] - px[j], py[k] - py[j]) > gap:
                groups.append(current)
                current = []
        current.append(k)
    if current:
        groups.append(current)
    # wrap-around: last and first group may be one object split at beam 0
    if len(groups) > 1 and hits[0] and hits[-1]:
        j, k = groups[-1][-1], groups[0][0]
        if math.hypot(px[k] - px[j], py[k] - py[j]) <= gap:
            groups[0] = groups.pop() + groups[0]

    clusters = []
    for idx in groups:
        pts = np.column_stack([px[idx], py[idx]])
        nearest = int(np.argmin(scan.ranges[idx]))
        clusters.append(Cluster(points=pts, centroid=pts.mean(axis=0),
                                closest_point=pts[nearest].copy()))
    return clusters


def icp_translation(src: np.ndarray, dst: np.ndarray, iterations: int = 40,
                    tol: float = 1e-6) -> np.ndarray:
    """Translation-only ICP of a 2-D point set onto another, with outlier
    trimming.

    Correspondences project src+T onto the polyline through the dst points
    (plain nearest point when dst is a single point), which avoids the
    vertex-aliasing that plagues sparse LiDAR silhouettes. Matches with
    residuals beyond 3x the median residual are dropped before each update.
    Returns the estimated translation.
    """
    # per-axis median init: projection updates cannot fix a tangential error
    # inherited from an outlier-skewed centroid
    t = np.median(dst, axis=0) - np.median(src, axis=0)
    single = len(dst) == 1
    if not single:
        a, b = dst[:-1], dst[1:]
        seg = b - a
        seg_len2 = np.maximum((seg * seg).sum(axis=1), 1e-18)
    for _ in range(iterations):
        moved = src + t
        if single:
            proj = np.tile(dst[0], (len(src), 1))
        else:
            ap = moved[:, None, :] - a[None, :, :]
            tt = np.clip((ap * seg[None]).sum(axis=2) / seg_len2[None], 0.0, 1.0)
            q = a[None] + tt[..., None] * seg[None]          # (n, m, 2)
            d2 = ((moved[:, None, :] - q) ** 2).sum(axis=2)
            j = np.argmin(d2, axis=1)
            proj = q[np.arange(len(src)), j]
        residuals = np.hypot(*(proj - moved).T)
        med = np.median(residuals)
        keep = residuals <= 3.0 * med + 1e-12
        delta = (proj[keep] - moved[keep]).mean(axis=0)
        t = t + delta
        if np.hypot(*delta) < tol:
            break
    return t


def estimate_velocity(track: ClusterTrack, matched: Cluster, dt: float,
                      displacement: np.ndarray | None = None,
                      beta: float = 0.5, baseline_steps: int = 1) -> np.ndarray:
    """Constant-velocity update for an accepted match.

    First observation yields (0, 0); the second initializes v = delta/dt;
    afterwards an EMA blends the newest sample in. The displacement defaults
    to the raw closest-point delta over one frame; the tracker passes the ICP
    translation over a multi-frame baseline (baseline_steps frames), which is
    far less sensitive to beam quantization.
    """
    if displacement is None:
        displacement = matched.closest_point - track.closest_point
    if track.observations == 0:
        return np.zeros(2)
    sample = displacement / (dt * baseline_steps)
    if track.observations == 1:
        return sample.astype(float)
    return (1.0 - beta) * track.velocity_estimate + beta * sample


class Tracker:
    """Per-observer track store. One instance per agent; instances share
    nothing and are safe to run in parallel across agents."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.tracks: list[ClusterTrack] = []
        self._next_id = 0

    def _new_track(self, cluster: Cluster, classification: TrackClass) -> ClusterTrack:
        track = ClusterTrack(
            id=self._next_id,
            closest_point=cluster.closest_point.copy(),
            velocity_estimate=np.zeros(2),
            classification=classification,
            points=cluster.points.copy(),
            history=[(0, cluster.points.copy())],
        )
        self._next_id += 1
        return track

    def update(self, scan: LidarScan, observer_pose: tuple[float, float, float],
               grid: OccupancyGrid, dt: float) -> list[ClusterTrack]:
        clusters = cluster_scan(scan, observer_pose, self.config.cluster_gap,
                                self.config.hit_margin)
        self.tracks = associate(self.tracks, clusters, grid, dt, self.config,
                                self._take_id)
        return self.tracks

    def _take_id(self, cluster: Cluster, classification: TrackClass) -> ClusterTrack:
        return self._new_track(cluster, classification)

    def dynamic_tracks(self) -> list[ClusterTrack]:
        return [t for t in self.tracks if t.classification == TrackClass.DYNAMIC
                and t.misses == 0]


def associate(prev_tracks: list[ClusterTrack], clusters: list[Cluster],
              grid: OccupancyGrid, dt: float,
              config: TrackerConfig | None = None,
              spawn=None) -> list[ClusterTrack]:
    """Hierarchical data association of clusters to tracks.

    Coarse stage: clusters whose points all sit within the static margin of
    inflated occupancy become Static with zero velocity. Fine stage: the
    rest are matched to predicted track positions under the gating radius,
    aligned by trimmed ICP, and accepted only when the implied speed stays
    below the gate; rejected or unmatched clusters spawn new tracks, and
    unmatched tracks coast for a few frames before dropping.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    cfg = config or TrackerConfig()
    if spawn is None:
        counter = [max((t.id for t in prev_tracks), default=-1) + 1]

        def spawn(cluster, classification):
            track = ClusterTrack(
                id=counter[0], closest_point=cluster.closest_point.copy(),
                velocity_estimate=np.zeros(2), classification=classification,
                points=cluster.points.copy(),
                history=[(0, cluster.points.copy())])
            counter[0] += 1
            return track

    static_clusters, dynamic_clusters = [], []
    for c in clusters:
        on_static = all(grid.occupied_near(p[0], p[1], cfg.static_margin)
                        for p in c.points)
        (static_clusters if on_static else dynamic_clusters).append(c)

    out: list[ClusterTrack] = []
    matched_tracks: set[int] = set()

    def match_pool(pool_tracks, pool_clusters, classification):
        # greedy nearest predicted-position assignment under the gate
        pairs = []
        for t in pool_tracks:
            pred = t.closest_point + t.velocity_estimate * dt
            for ci, c in enumerate(pool_clusters):
                d = float(np.hypot(*(c.closest_point - pred)))
                if d <= cfg.gating_radius:
                    pairs.append((d, t.id, ci))
        pairs.sort()
        used_clusters: set[int] = set()
        by_id = {t.id: t for t in pool_tracks}
        for d, tid, ci in pairs:
            if tid in matched_tracks or ci in used_clusters:
                continue
            track, cluster = by_id[tid], pool_clusters[ci]
            shift = icp_translation(track.points, cluster.points)
            if np.hypot(*shift) / dt > cfg.v_max_gate:
                continue  # spatiotemporal consistency gate: spawn fresh later
            matched_tracks.add(tid)
            used_clusters.add(ci)
            if classification == TrackClass.DYNAMIC:
                if track.history:
                    frames, base_points = max(track.history, key=lambda e: e[0])
                    base_shift = icp_translation(base_points, cluster.points)
                else:
                    frames, base_shift = 1, shift
                track.velocity_estimate = estimate_velocity(
                    track, cluster, dt, displacement=base_shift,
                    beta=cfg.ema_beta, baseline_steps=frames)
            else:
                track.velocity_estimate = np.zeros(2)
            track.closest_point = cluster.closest_point.copy()
            track.points = cluster.points.copy()
            track.history.append((0, cluster.points.copy()))
            track.age += 1
            track.observations += 1
            track.misses = 0
            out.append(track)
        return [c for ci, c in enumerate(pool_clusters) if ci not in used_clusters]

    prev_static = [t for t in prev_tracks if t.classification == TrackClass.STATIC]
    prev_dynamic = [t for t in prev_tracks if t.classification == TrackClass.DYNAMIC]
    leftover_static = match_pool(prev_static, static_clusters, TrackClass.STATIC)
    leftover_dynamic = match_pool(prev_dynamic, dynamic_clusters, TrackClass.DYNAMIC)

    for c in leftover_static:
        out.append(spawn(c, TrackClass.STATIC))
    for c in leftover_dynamic:
        out.append(spawn(c, TrackClass.DYNAMIC))

    for t in prev_tracks:
        if t.id in matched_tracks:
            continue
        t.misses += 1
        if t.misses > cfg.grace_steps:
            continue
        t.age += 1
        if t.classification == TrackClass.DYNAMIC:
            t.closest_point = t.closest_point + t.velocity_estimate * dt
            t.points = t.points + t.velocity_estimate * dt
        out.append(t)

    # age the baseline snapshots one frame, keep the window bounded
    for t in out:
        t.history = [(frames + 1, pts) for frames, pts in t.history
                     if frames + 1 <= cfg.velocity_baseline_steps]
    return out
