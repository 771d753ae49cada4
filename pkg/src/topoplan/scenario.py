"""Scenario files, result export and metric computation.

Scenarios are YAML documents; see ``scenarios/`` for the shipped fixtures
and the README for the schema.  Parsing is total: any input either yields
a validated Scenario or a ScenarioError naming the offending field.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .costs import Weights
from .topology import InteractionPattern
from .trajectory import BoundaryState, Trajectory, arc_length

DEFAULT_VEHICLE_RADIUS = 0.535  # half-diagonal of a 0.85 x 0.65 m footprint


class ScenarioError(ValueError):
    """Raised for malformed or inconsistent scenario documents."""


@dataclass(frozen=True)
class Vehicle:
    id: str
    start: BoundaryState
    goal: BoundaryState
    radius: float = DEFAULT_VEHICLE_RADIUS


@dataclass(frozen=True)
class Obstacle:
    id: str
    center: np.ndarray
    radius: float


@dataclass(frozen=True)
class Scenario:
    arena: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    vehicles: list[Vehicle]
    obstacles: list[Obstacle]
    pattern: InteractionPattern
    weights: Weights

    def vehicle(self, vid: str) -> Vehicle:
        for v in self.vehicles:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def with_pattern(self, pattern) -> "Scenario":
        """Copy of the scenario with the interaction pattern replaced.

        Accepts an InteractionPattern or a {(id_a, id_b): label} mapping.
        """
        if not isinstance(pattern, InteractionPattern):
            pattern = InteractionPattern(pattern)
        return replace(self, pattern=pattern)


def _vec2(node, where: str) -> np.ndarray:
    if (
        not isinstance(node, (list, tuple))
        or len(node) != 2
        or not all(isinstance(x, (int, float)) for x in node)
    ):
        raise ScenarioError(f"{where}: expected a [x, y] pair, got {node!r}")
    v = np.array(node, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ScenarioError(f"{where}: entries must be finite")
    return v


def _number(node, where: str, positive: bool = False) -> float:
    if not isinstance(node, (int, float)):
        raise ScenarioError(f"{where}: expected a number, got {node!r}")
    if positive and node <= 0:
        raise ScenarioError(f"{where}: must be positive")
    return float(node)


def _inside(p, arena, where: str):
    xmin, ymin, xmax, ymax = arena
    if not (xmin <= p[0] <= xmax and ymin <= p[1] <= ymax):
        raise ScenarioError(f"{where}: point {p.tolist()} outside arena {arena}")


_WEIGHT_KEYS = {
    "w_time", "w_topo", "w_kin", "w_col", "d_safe",
    "v_max", "a_max", "cubic_topology_hinge",
}


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("top level must be a mapping")

    unknown = set(doc) - {"arena", "limits", "weights", "vehicles", "obstacles", "interactions"}
    if unknown:
        raise ScenarioError(f"unknown top-level keys: {sorted(unknown)}")

    arena_node = doc.get("arena", [0.0, 0.0, 10.0, 10.0])
    if not isinstance(arena_node, (list, tuple)) or len(arena_node) != 4:
        raise ScenarioError("arena: expected [xmin, ymin, xmax, ymax]")
    arena = tuple(_number(x, "arena") for x in arena_node)
    if arena[0] >= arena[2] or arena[1] >= arena[3]:
        raise ScenarioError("arena: min bounds must be below max bounds")

    wkw = {}
    limits = doc.get("limits", {})
    if not isinstance(limits, dict):
        raise ScenarioError("limits: expected a mapping")
    for key in limits:
        if key not in ("v_max", "a_max"):
            raise ScenarioError(f"limits: unknown key {key!r}")
        wkw[key] = _number(limits[key], f"limits.{key}", positive=True)
    weights_node = doc.get("weights", {})
    if not isinstance(weights_node, dict):
        raise ScenarioError("weights: expected a mapping")
    for key, val in weights_node.items():
        if key not in _WEIGHT_KEYS:
            raise ScenarioError(f"weights: unknown key {key!r}")
        if key == "cubic_topology_hinge":
            wkw[key] = bool(val)
        else:
            wkw[key] = _number(val, f"weights.{key}")
    weights = Weights(**wkw)

    vehicles_node = doc.get("vehicles")
    if not isinstance(vehicles_node, list) or not vehicles_node:
        raise ScenarioError("vehicles: expected a non-empty list")
    vehicles = []
    ids: set[str] = set()
    for idx, vn in enumerate(vehicles_node):
        where = f"vehicles[{idx}]"
        if not isinstance(vn, dict):
            raise ScenarioError(f"{where}: expected a mapping")
        vid = vn.get("id")
        if not isinstance(vid, str) or not vid:
            raise ScenarioError(f"{where}: missing string 'id'")
        if vid in ids:
            raise ScenarioError(f"{where}: duplicate id {vid!r}")
        ids.add(vid)
        allowed = {"id", "start", "goal", "start_velocity", "goal_velocity",
                   "start_acceleration", "goal_acceleration", "radius"}
        bad = set(vn) - allowed
        if bad:
            raise ScenarioError(f"{where}: unknown keys {sorted(bad)}")
        start_p = _vec2(vn.get("start"), f"{where}.start")
        goal_p = _vec2(vn.get("goal"), f"{where}.goal")
        _inside(start_p, arena, f"{where}.start")
        _inside(goal_p, arena, f"{where}.goal")
        start = BoundaryState(
            start_p,
            _vec2(vn["start_velocity"], f"{where}.start_velocity")
            if "start_velocity" in vn else np.zeros(2),
            _vec2(vn["start_acceleration"], f"{where}.start_acceleration")
            if "start_acceleration" in vn else np.zeros(2),
        )
        goal = BoundaryState(
            goal_p,
            _vec2(vn["goal_velocity"], f"{where}.goal_velocity")
            if "goal_velocity" in vn else np.zeros(2),
            _vec2(vn["goal_acceleration"], f"{where}.goal_acceleration")
            if "goal_acceleration" in vn else np.zeros(2),
        )
        radius = _number(vn.get("radius", DEFAULT_VEHICLE_RADIUS), f"{where}.radius", positive=True)
        vehicles.append(Vehicle(vid, start, goal, radius))

    obstacles = []
    for idx, on in enumerate(doc.get("obstacles") or []):
        where = f"obstacles[{idx}]"
        if not isinstance(on, dict):
            raise ScenarioError(f"{where}: expected a mapping")
        bad = set(on) - {"id", "center", "radius"}
        if bad:
            raise ScenarioError(f"{where}: unknown keys {sorted(bad)}")
        oid = on.get("id", f"obs{idx}")
        if not isinstance(oid, str) or oid in ids:
            raise ScenarioError(f"{where}: bad or duplicate id {oid!r}")
        ids.add(oid)
        center = _vec2(on.get("center"), f"{where}.center")
        _inside(center, arena, f"{where}.center")
        radius = _number(on.get("radius"), f"{where}.radius", positive=True)
        obstacles.append(Obstacle(oid, center, radius))

    pattern = InteractionPattern()
    for idx, inode in enumerate(doc.get("interactions") or []):
        where = f"interactions[{idx}]"
        if not isinstance(inode, dict) or set(inode) != {"pair", "label"}:
            raise ScenarioError(f"{where}: expected {{pair: [a, b], label: -1|0|1}}")
        pair = inode["pair"]
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ScenarioError(f"{where}.pair: expected two ids")
        a, b = pair
        for x in (a, b):
            if x not in ids:
                raise ScenarioError(f"{where}.pair: unknown id {x!r}")
        label = inode["label"]
        if label not in (-1, 0, 1):
            raise ScenarioError(f"{where}.label: must be -1, 0 or +1")
        try:
            pattern.set(a, b, label)
        except ValueError as exc:
            raise ScenarioError(f"{where}: {exc}") from exc

    return Scenario(arena, vehicles, obstacles, pattern, weights)


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def serialize_scenario(scn: Scenario) -> str:
    """YAML text that parses back to an identical scenario."""
    doc: dict = {"arena": list(scn.arena)}
    defaults = Weights()
    wnode = {}
    for key in sorted(_WEIGHT_KEYS):
        val = getattr(scn.weights, key)
        if val != getattr(defaults, key):
            wnode[key] = val
    if wnode:
        doc["weights"] = wnode
    doc["vehicles"] = []
    for v in scn.vehicles:
        vn = {"id": v.id, "start": v.start.position.tolist(), "goal": v.goal.position.tolist()}
        if np.any(v.start.velocity):
            vn["start_velocity"] = v.start.velocity.tolist()
        if np.any(v.start.acceleration):
            vn["start_acceleration"] = v.start.acceleration.tolist()
        if np.any(v.goal.velocity):
            vn["goal_velocity"] = v.goal.velocity.tolist()
        if np.any(v.goal.acceleration):
            vn["goal_acceleration"] = v.goal.acceleration.tolist()
        if v.radius != DEFAULT_VEHICLE_RADIUS:
            vn["radius"] = v.radius
        doc["vehicles"].append(vn)
    if scn.obstacles:
        doc["obstacles"] = [
            {"id": o.id, "center": o.center.tolist(), "radius": o.radius}
            for o in scn.obstacles
        ]
    inter = [
        {"pair": [a, b], "label": eta} for (a, b), eta in scn.pattern.items()
    ]
    if inter:
        doc["interactions"] = inter
    return yaml.safe_dump(doc, sort_keys=False)


# ---------------------------------------------------------------------------
# export and metrics

EXPORT_HZ = 100
RENDER_SAMPLES = 200
SVG_SCALE = 50.0  # px per meter, origin bottom-left

_PALETTE = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd",
            "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
            "#aec7e8", "#98df8a"]


def export_trajectories(trajectories: dict[str, Trajectory], path) -> None:
    """Write sampled trajectories as CSV at a fixed 100 Hz grid.

    Rows are ordered by time, then by vehicle in dict order; vehicles that
    finish early keep emitting held-at-goal rows up to the longest horizon.
    """
    max_dur = max(t.total_duration for t in trajectories.values())
    steps = int(np.floor(EXPORT_HZ * max_dur)) + 1
    times = np.arange(steps) / EXPORT_HZ
    sampled = {vid: traj.sample(times) for vid, traj in trajectories.items()}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,vehicle_id,x,y,vx,vy,ax,ay\n")
        for si, t in enumerate(times):
            for vid, states in sampled.items():
                s = states[si]
                vals = (float(t), float(s[0, 0]), float(s[0, 1]), float(s[1, 0]),
                        float(s[1, 1]), float(s[2, 0]), float(s[2, 1]))
                fh.write(f"{vals[0]!r},{vid}," + ",".join(repr(v) for v in vals[1:]) + "\n")


def render_svg(scn: Scenario, trajectories: dict[str, Trajectory], path) -> None:
    """Static SVG plot: arena frame, obstacles, trajectories, markers.

    Dictionary values may be Trajectory objects (sampled at the documented
    render density) or pre-sampled (K, 2) position arrays.
    """
    xmin, ymin, xmax, ymax = scn.arena
    pad = 0.5
    w = (xmax - xmin + 2 * pad) * SVG_SCALE
    h = (ymax - ymin + 2 * pad) * SVG_SCALE

    def px(p):
        return (
            (p[0] - xmin + pad) * SVG_SCALE,
            h - (p[1] - ymin + pad) * SVG_SCALE,
        )

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.1f} {h:.1f}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    x0, y0 = px((xmin, ymax))
    parts.append(
        f'<rect x="{x0:.1f}" y="{y0:.1f}" width="{(xmax - xmin) * SVG_SCALE:.1f}" '
        f'height="{(ymax - ymin) * SVG_SCALE:.1f}" fill="none" stroke="black"/>'
    )
    for obs in scn.obstacles:
        cx, cy = px(obs.center)
        parts.append(
            f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="{obs.radius * SVG_SCALE:.1f}" '
            'fill="#cccccc" stroke="#555555"/>'
        )
    for i, (vid, traj) in enumerate(trajectories.items()):
        color = _PALETTE[i % len(_PALETTE)]
        if hasattr(traj, "sample"):
            times = np.linspace(0.0, traj.total_duration, RENDER_SAMPLES)
            pts = traj.sample(times)[:, 0]
        else:
            pts = np.asarray(traj, dtype=float).reshape(-1, 2)
        coords = " ".join(f"{px(p)[0]:.1f},{px(p)[1]:.1f}" for p in pts)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        sx, sy = px(pts[0])
        gx, gy = px(pts[-1])
        parts.append(f'<circle cx="{sx:.1f}" cy="{sy:.1f}" r="4" fill="{color}"/>')
        parts.append(
            f'<rect x="{gx - 4:.1f}" y="{gy - 4:.1f}" width="8" height="8" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{sx + 6:.1f}" y="{sy - 6:.1f}" font-size="12" fill="{color}">{vid}</text>'
        )
    names = {-1: "ccw", 0: "none", 1: "cw"}
    for li, ((a, b), eta) in enumerate(scn.pattern.items()):
        parts.append(
            f'<text x="6" y="{14 + 14 * li}" font-size="12" fill="black">'
            f"{a}-{b}: {names[eta]}</text>"
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


@dataclass(frozen=True)
class Metrics:
    computation_ms: float
    total_travel_distance: float
    total_travel_duration: float
    max_duration: float
    min_pairwise_distance: float


def min_pairwise_distance(trajectories, samples_per_traj: int = 1000) -> float:
    """Densely sampled minimum center distance over all vehicle pairs."""
    trajs = list(trajectories)
    if len(trajs) < 2:
        return float("inf")
    horizon = max(t.total_duration for t in trajs)
    times = np.linspace(0.0, horizon, samples_per_traj)
    positions = [t.sample(times)[:, 0] for t in trajs]
    best = float("inf")
    for i in range(len(trajs)):
        for j in range(i + 1, len(trajs)):
            d = np.linalg.norm(positions[i] - positions[j], axis=1)
            best = min(best, float(d.min()))
    return best


def compute_metrics(trajectories, computation_ms: float = 0.0) -> Metrics:
    """Travel distance/duration aggregates plus the safety-critical
    minimum inter-vehicle distance."""
    trajs = list(trajectories)
    return Metrics(
        computation_ms=computation_ms,
        total_travel_distance=float(sum(arc_length(t) for t in trajs)),
        total_travel_duration=float(sum(t.total_duration for t in trajs)),
        max_duration=float(max(t.total_duration for t in trajs)),
        min_pairwise_distance=min_pairwise_distance(trajs),
    )
