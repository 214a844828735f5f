"""JSON scenario and pipeline configuration.

Scenario file::

    {
      "name": "office",
      "seed": 1,
      "environment": {
        "bounds": [xmin, ymin, xmax, ymax],
        "anchors": [{"id": 0, "x": 0.5, "y": 0.5}, ...],
        "walls": [[x1, y1, x2, y2], ...]
      },
      "trajectories": [{"waypoints": [[x, y], ...], "speed": 1.0, "rate": 10.0}],
      "start_position": [x, y],
      "anchor_subsets": {"5": [0, 1, 2, 3, 4]},
      "noise": {...NoiseModel fields...},
      "train": {...TrainConfig fields...},
      "solver": {...SolverConfig fields...}
    }

``trajectory`` (a single object) is accepted in place of ``trajectories``.
Each trajectory is simulated as a separate pass. A pipeline file holds
shared ``seed``/``noise``/``train``/``solver`` blocks plus a
``train_scenario`` and a list of ``test_scenarios``; scenario-level blocks
override the shared ones field by field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from .geometry import Anchor, Environment, NoiseModel, Point2, make_segment
from .nn import TrainConfig
from .rng import Rng
from .wls import SolverConfig


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass(frozen=True)
class TrajectorySpec:
    waypoints: tuple
    speed: float
    rate: float


@dataclass
class ScenarioConfig:
    name: str
    environment: Environment
    trajectories: list[TrajectorySpec]
    noise: NoiseModel = field(default_factory=NoiseModel)
    train: TrainConfig = field(default_factory=TrainConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0
    start_position: Optional[Point2] = None
    anchor_subsets: dict[str, list[int]] = field(default_factory=dict)

    @property
    def start(self) -> Point2:
        if self.start_position is not None:
            return self.start_position
        return Point2(*self.trajectories[0].waypoints[0])

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed, noise=replace(self.noise, seed=seed),
                       train=replace(self.train, seed=seed))


@dataclass
class PipelineConfig:
    seed: int
    train_scenario: ScenarioConfig
    test_scenarios: list[ScenarioConfig]
    source: dict = field(default_factory=dict)   # fully resolved document


def _num(value, where: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer and not float(value).is_integer():
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: non-finite value")
    return int(value) if integer else float(value)


def _obj(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected an object")
    return value


def _point(value, where: str) -> Point2:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{where}: expected [x, y]")
    return Point2(_num(value[0], f"{where}[0]"), _num(value[1], f"{where}[1]"))


def parse_environment(doc: Any, where: str = "environment") -> Environment:
    doc = _obj(doc, where)
    bounds = doc.get("bounds")
    if not isinstance(bounds, list) or len(bounds) != 4:
        raise ConfigError(f"{where}.bounds: expected [xmin, ymin, xmax, ymax]")
    bounds = tuple(_num(b, f"{where}.bounds[{i}]") for i, b in enumerate(bounds))
    anchors = []
    for i, a in enumerate(doc.get("anchors") or []):
        a = _obj(a, f"{where}.anchors[{i}]")
        for k in ("id", "x", "y"):
            if k not in a:
                raise ConfigError(f"{where}.anchors[{i}].{k}: missing")
        anchors.append(Anchor(_num(a["id"], f"{where}.anchors[{i}].id", integer=True),
                              Point2(_num(a["x"], f"{where}.anchors[{i}].x"),
                                     _num(a["y"], f"{where}.anchors[{i}].y"))))
    walls = []
    for i, w in enumerate(doc.get("walls") or []):
        if not isinstance(w, list) or len(w) != 4:
            raise ConfigError(f"{where}.walls[{i}]: expected [x1, y1, x2, y2]")
        try:
            walls.append(make_segment(*(_num(c, f"{where}.walls[{i}]") for c in w)))
        except ValueError as exc:
            raise ConfigError(f"{where}.walls[{i}]: {exc}") from None
    try:
        return Environment(anchors, walls, bounds)
    except ValueError as exc:
        raise ConfigError(f"{where}.{exc}") from None


def _dataclass_block(cls, doc, where: str, base=None):
    doc = _obj(doc or {}, where)
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for k, v in doc.items():
        if k not in known:
            raise ConfigError(f"{where}.{k}: unknown field")
        if isinstance(v, str):
            kwargs[k] = v
        else:
            kwargs[k] = _num(v, f"{where}.{k}", integer=known[k].type in ("int", int))
    try:
        return replace(base, **kwargs) if base is not None else cls(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith(where) else f"{where}: {msg}") from None


def _trajectory(doc, where: str) -> TrajectorySpec:
    doc = _obj(doc, where)
    wps = doc.get("waypoints")
    if not isinstance(wps, list) or len(wps) < 2:
        raise ConfigError(f"{where}.waypoints: need at least two points")
    pts = tuple(_point(p, f"{where}.waypoints[{i}]") for i, p in enumerate(wps))
    speed = _num(doc.get("speed", 1.0), f"{where}.speed")
    rate = _num(doc.get("rate", 10.0), f"{where}.rate")
    if speed <= 0:
        raise ConfigError(f"{where}.speed: must be positive")
    if rate <= 0:
        raise ConfigError(f"{where}.rate: must be positive")
    return TrajectorySpec(pts, speed, rate)


def parse_scenario(doc: Any, where: str = "", defaults: Optional[dict] = None) -> ScenarioConfig:
    """Build a ScenarioConfig, naming the offending field on any error."""
    doc = _obj(doc, where or "<root>")
    defaults = defaults or {}
    p = f"{where}." if where else ""
    env = parse_environment(doc.get("environment"), f"{p}environment")

    if "trajectories" in doc:
        raw = doc["trajectories"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError(f"{p}trajectories: expected a non-empty list")
        trajs = [_trajectory(t, f"{p}trajectories[{i}]") for i, t in enumerate(raw)]
    elif "trajectory" in doc:
        trajs = [_trajectory(doc["trajectory"], f"{p}trajectory")]
    else:
        raise ConfigError(f"{p}trajectories: missing")
    for i, tr in enumerate(trajs):
        for j, w in enumerate(tr.waypoints):
            xmin, ymin, xmax, ymax = env.bounds
            if not (xmin <= w.x <= xmax and ymin <= w.y <= ymax):
                raise ConfigError(f"{p}trajectories[{i}].waypoints[{j}]: outside environment bounds")

    seed = _num(doc.get("seed", defaults.get("seed", 0)), f"{p}seed", integer=True)
    noise = _dataclass_block(NoiseModel, defaults.get("noise"), f"{p}noise", NoiseModel(seed=seed))
    noise = _dataclass_block(NoiseModel, doc.get("noise"), f"{p}noise", noise)
    train = _dataclass_block(TrainConfig, defaults.get("train"), f"{p}train", TrainConfig(seed=seed))
    train = _dataclass_block(TrainConfig, doc.get("train"), f"{p}train", train)
    solver = _dataclass_block(SolverConfig, defaults.get("solver"), f"{p}solver", SolverConfig())
    solver = _dataclass_block(SolverConfig, doc.get("solver"), f"{p}solver", solver)

    start = doc.get("start_position")
    start = None if start is None else _point(start, f"{p}start_position")
    subsets = {}
    for k, ids in _obj(doc.get("anchor_subsets") or {}, f"{p}anchor_subsets").items():
        if not isinstance(ids, list) or not ids:
            raise ConfigError(f"{p}anchor_subsets.{k}: expected a list of anchor ids")
        for i in ids:
            try:
                env.anchor(i)
            except KeyError:
                raise ConfigError(f"{p}anchor_subsets.{k}: unknown anchor id {i!r}") from None
        subsets[str(k)] = list(ids)
    name = doc.get("name", where or "scenario")
    if not isinstance(name, str) or not name or "/" in name:
        raise ConfigError(f"{p}name: expected a plain string")
    return ScenarioConfig(name, env, trajs, noise, train, solver, seed, start, subsets)


def _load_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None


def load_scenario(path, seed: Optional[int] = None) -> ScenarioConfig:
    try:
        sc = parse_scenario(_load_json(path))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return sc.with_seed(seed) if seed is not None else sc


def derived_seed(seed: int, index: int) -> int:
    """Seed for the ``index``-th scenario of a pipeline (0 = training)."""
    return Rng(seed).substream(index).key & ((1 << 63) - 1)


def parse_pipeline(doc: Any, seed: Optional[int] = None, base_dir=None) -> PipelineConfig:
    """Build a PipelineConfig; string scenario entries are JSON files relative to ``base_dir``."""
    doc = dict(_obj(doc, "<root>"))
    base_dir = Path(base_dir or ".")
    base_seed = _num(doc.get("seed", 0), "seed", integer=True) if seed is None else seed
    shared = {k: doc.get(k) for k in ("noise", "train", "solver")}
    if "train_scenario" not in doc:
        raise ConfigError("train_scenario: missing")
    tests = doc.get("test_scenarios")
    if not isinstance(tests, list) or not tests:
        raise ConfigError("test_scenarios: expected a non-empty list")

    def resolve(d, where):
        if isinstance(d, str):
            try:
                return _obj(_load_json(base_dir / d), where)
            except ConfigError as exc:
                raise ConfigError(f"{where}: {exc}") from None
        return _obj(d, where)

    def build(d, where, index):
        sc = parse_scenario(d, where, dict(shared, seed=derived_seed(base_seed, index)))
        if seed is not None or "seed" not in d:
            sc = sc.with_seed(derived_seed(base_seed, index))
        return sc

    doc["train_scenario"] = resolve(doc["train_scenario"], "train_scenario")
    doc["test_scenarios"] = [resolve(d, f"test_scenarios[{i}]") for i, d in enumerate(tests)]
    doc["seed"] = base_seed
    train = build(doc["train_scenario"], "train_scenario", 0)
    test = [build(d, f"test_scenarios[{i}]", i + 1) for i, d in enumerate(doc["test_scenarios"])]
    names = [t.name for t in test]
    if len(set(names)) != len(names):
        raise ConfigError("test_scenarios: duplicate scenario names")
    return PipelineConfig(base_seed, train, test, doc)


def load_pipeline(path, seed: Optional[int] = None) -> PipelineConfig:
    try:
        return parse_pipeline(_load_json(path), seed, Path(path).parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def bundled_config(name: str) -> Path:
    """Path of a configuration shipped with the package (e.g. ``"office.json"``)."""
    path = Path(__file__).parent / "configs" / name
    if not path.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return path
