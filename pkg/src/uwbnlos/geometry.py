"""2D environments, line-of-sight tests and synthetic UWB ranging."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .features import RangingSample
from .rng import Rng


class Point2(NamedTuple):
    x: float
    y: float


class Segment2(NamedTuple):
    a: Point2
    b: Point2


class Anchor(NamedTuple):
    id: int
    position: Point2


class Pose(NamedTuple):
    t: float
    position: Point2


Bounds = tuple  # (xmin, ymin, xmax, ymax)


def make_segment(ax: float, ay: float, bx: float, by: float) -> Segment2:
    seg = Segment2(Point2(float(ax), float(ay)), Point2(float(bx), float(by)))
    if seg.a == seg.b:
        raise ValueError(f"degenerate segment {seg}")
    return seg


def in_bounds(p: Point2, bounds: Bounds) -> bool:
    xmin, ymin, xmax, ymax = bounds
    return xmin <= p.x <= xmax and ymin <= p.y <= ymax


@dataclass
class Environment:
    """Anchors, occluding walls and the axis-aligned area they live in."""

    anchors: list[Anchor]
    walls: list[Segment2] = field(default_factory=list)
    bounds: Bounds = (0.0, 0.0, 10.0, 10.0)

    def __post_init__(self):
        if not self.anchors:
            raise ValueError("environment needs at least one anchor")
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ValueError(f"bounds: empty rectangle {self.bounds}")
        ids = [a.id for a in self.anchors]
        if len(set(ids)) != len(ids):
            raise ValueError(f"anchors: duplicate ids in {ids}")
        for i, a in enumerate(self.anchors):
            if not in_bounds(a.position, self.bounds):
                raise ValueError(f"anchors[{i}]: anchor {a.id} at {tuple(a.position)} outside bounds")
        for i, w in enumerate(self.walls):
            if w.a == w.b:
                raise ValueError(f"walls[{i}]: degenerate segment")

    def anchor(self, anchor_id: int) -> Anchor:
        for a in self.anchors:
            if a.id == anchor_id:
                return a
        raise KeyError(f"unknown anchor id {anchor_id}")

    def subset(self, ids: Sequence[int]) -> "Environment":
        """Environment restricted to the given anchor ids (in that order)."""
        return Environment([self.anchor(i) for i in ids], list(self.walls), self.bounds)


@dataclass(frozen=True)
class NoiseModel:
    """Measurement generator parameters.

    Ranges: LOS adds N(0, los_range_sigma); NLOS adds a positive
    U(nlos_bias_min, nlos_bias_max) bias plus N(0, nlos_range_sigma).
    Signal strength follows log-distance path loss with extra attenuation of
    the total (``nlos_rx_attenuation_*``) and first-path
    (``nlos_fp_extra_attenuation_*``) power under NLOS.
    """

    los_range_sigma: float = 0.05
    nlos_bias_min: float = 0.2
    nlos_bias_max: float = 2.5
    nlos_range_sigma: float = 0.15
    rssi_path_loss_exponent: float = 2.0
    rssi_ref_power: float = -62.0
    rssi_sigma: float = 2.0
    nlos_rx_attenuation_min: float = 1.0
    nlos_rx_attenuation_max: float = 6.0
    nlos_fp_extra_attenuation_min: float = 3.0
    nlos_fp_extra_attenuation_max: float = 12.0
    seed: int = 0

    def __post_init__(self):
        for name in ("los_range_sigma", "nlos_range_sigma", "rssi_sigma", "nlos_bias_min",
                     "nlos_rx_attenuation_min", "nlos_fp_extra_attenuation_min"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"noise.{name}: must be >= 0")
        for lo, hi in (("nlos_bias_min", "nlos_bias_max"),
                       ("nlos_rx_attenuation_min", "nlos_rx_attenuation_max"),
                       ("nlos_fp_extra_attenuation_min", "nlos_fp_extra_attenuation_max")):
            if getattr(self, hi) < getattr(self, lo):
                raise ValueError(f"noise.{hi}: must be >= {lo}")

    @classmethod
    def zero(cls, **overrides) -> "NoiseModel":
        """All noise, bias and attenuation terms set to zero."""
        base = dict(los_range_sigma=0.0, nlos_bias_min=0.0, nlos_bias_max=0.0,
                    nlos_range_sigma=0.0, rssi_sigma=0.0, nlos_rx_attenuation_min=0.0,
                    nlos_rx_attenuation_max=0.0, nlos_fp_extra_attenuation_min=0.0,
                    nlos_fp_extra_attenuation_max=0.0)
        base.update(overrides)
        return cls(**base)


def _cross(o: Point2, a: Point2, b: Point2) -> float:
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)


def _on_segment(p: Point2, q: Point2, r: Point2) -> bool:
    # r is known to be collinear with p-q
    return min(p.x, q.x) <= r.x <= max(p.x, q.x) and min(p.y, q.y) <= r.y <= max(p.y, q.y)


def segments_intersect(s1: Segment2, s2: Segment2) -> bool:
    """True iff the closed segments share a point (touching and collinear overlap count)."""
    p1, p2 = s1
    p3, p4 = s2
    d1 = _cross(p3, p4, p1)
    d2 = _cross(p3, p4, p2)
    d3 = _cross(p1, p2, p3)
    d4 = _cross(p1, p2, p4)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment(p3, p4, p1):
        return True
    if d2 == 0 and _on_segment(p3, p4, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, p3):
        return True
    if d4 == 0 and _on_segment(p1, p2, p4):
        return True
    return False


def is_los(tag: Point2, anchor: Point2, env: Environment) -> bool:
    """True iff no wall intersects the straight tag-anchor path."""
    ray = Segment2(Point2(*tag), Point2(*anchor))
    return not any(segments_intersect(ray, w) for w in env.walls)


def distance(a: Point2, b: Point2) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def synthesize_measurement(true_pos: Point2, anchor: Anchor, env: Environment,
                           noise: NoiseModel, t: float, rng: Rng) -> RangingSample:
    """One noisy range/RSSI record between a tag and an anchor.

    The same number of draws is consumed whatever the LOS state, so a stream
    position maps to the same sample slot regardless of geometry.
    """
    d = distance(true_pos, anchor.position)
    if not d > 0:
        raise ValueError(f"tag coincides with anchor {anchor.id}")
    los = is_los(true_pos, anchor.position, env)

    z_range = rng.normal()
    bias = rng.uniform(None, noise.nlos_bias_min, noise.nlos_bias_max)
    z_rx = rng.normal()
    rx_att = rng.uniform(None, noise.nlos_rx_attenuation_min, noise.nlos_rx_attenuation_max)
    fp_att = rng.uniform(None, noise.nlos_fp_extra_attenuation_min, noise.nlos_fp_extra_attenuation_max)
    z_fp = rng.normal()

    if los:
        rng_val = d + noise.los_range_sigma * z_range
    else:
        rng_val = d + bias + noise.nlos_range_sigma * z_range
    rng_val = max(rng_val, 0.0)

    rx = (noise.rssi_ref_power - 10.0 * noise.rssi_path_loss_exponent * math.log10(d)
          + noise.rssi_sigma * z_rx)
    if not los:
        rx -= rx_att
    fp = rx - (0.0 if los else fp_att) + noise.rssi_sigma * z_fp
    fp = min(fp, rx)
    return RangingSample(t=float(t), anchor_id=anchor.id, range=rng_val,
                         rx_rssi=rx, fp_rssi=fp, los_label=1 if los else 0)


def generate_trajectory(waypoints: Sequence[Sequence[float]], speed: float,
                        sample_rate: float, t0: float = 0.0) -> list[Pose]:
    """Constant-speed poses along a polyline, sampled at ``k / sample_rate``."""
    pts = [Point2(float(x), float(y)) for x, y in waypoints]
    if len(pts) < 2:
        raise ValueError("trajectory needs at least two waypoints")
    if not (speed > 0 and sample_rate > 0):
        raise ValueError("speed and sample_rate must be positive")
    seg_len = [distance(a, b) for a, b in zip(pts, pts[1:])]
    total = sum(seg_len)
    if total <= 0:
        raise ValueError("trajectory has zero length")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    duration = total / speed
    n = int(math.floor(duration * sample_rate + 1e-9)) + 1
    poses = []
    for k in range(n):
        t = k / sample_rate
        s = min(t * speed, total)
        i = int(np.searchsorted(cum, s, side="right") - 1)
        i = min(max(i, 0), len(seg_len) - 1)
        while seg_len[i] == 0 and i < len(seg_len) - 1:
            i += 1
        frac = 0.0 if seg_len[i] == 0 else (s - cum[i]) / seg_len[i]
        a, b = pts[i], pts[i + 1]
        poses.append(Pose(t0 + t, Point2(a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y))))
    return poses


def simulate_campaign(env: Environment, trajectory: Sequence[Pose], noise: NoiseModel,
                      pass_index: int = 0) -> list[RangingSample]:
    """One sample per (pose, anchor), ordered by pose then anchor.

    Pose ``k`` of pass ``p`` draws from substream ``k`` of substream ``p`` of
    the noise seed, so poses can be generated in any order.
    """
    if not trajectory:
        raise ValueError("empty trajectory")
    base = Rng(noise.seed).substream(pass_index)
    out = []
    for k, pose in enumerate(trajectory):
        if not in_bounds(pose.position, env.bounds):
            raise ValueError(f"pose at t={pose.t} outside environment bounds")
        rng = base.substream(k)
        for anchor in env.anchors:
            out.append(synthesize_measurement(pose.position, anchor, env, noise, pose.t, rng))
    return out


def true_ranges(samples: Sequence[RangingSample], trajectory: Sequence[Pose],
                env: Environment) -> np.ndarray:
    """Exact tag-anchor distances for samples, matched to poses by timestamp."""
    by_t = {p.t: p.position for p in trajectory}
    return np.array([distance(by_t[s.t], env.anchor(s.anchor_id).position) for s in samples])
