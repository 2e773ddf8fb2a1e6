"""Vector-map lane graph and the intersection lane-selection procedure."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import LaneNotFoundError, MapParseError

CITY_DRIVING = "CITY_DRIVING"


@dataclass
class Lane:
    id: str
    centerline: np.ndarray  # (M, 3) meters
    lane_type: str = CITY_DRIVING
    is_intersection: bool = False
    successors: list[str] = field(default_factory=list)
    predecessors: list[str] = field(default_factory=list)
    adjacent: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.centerline = np.asarray(self.centerline, dtype=np.float64)
        if self.centerline.ndim != 2 or self.centerline.shape[1] != 3 or self.centerline.shape[0] < 2:
            raise MapParseError(f"lane '{self.id}': centerline must be (M>=2, 3)")
        if (np.linalg.norm(np.diff(self.centerline, axis=0), axis=1) == 0).any():
            raise MapParseError(f"lane '{self.id}': consecutive centerline points coincide")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.centerline, axis=0), axis=1).sum())

    def neighbors(self) -> list[str]:
        return self.successors + self.predecessors + self.adjacent

    def start_direction(self) -> np.ndarray:
        d = self.centerline[1] - self.centerline[0]
        return d / np.linalg.norm(d)

    def point_distance(self, point) -> float:
        """Minimum distance from ``point`` to the centerline polyline."""
        p = np.asarray(point, dtype=np.float64)
        a = self.centerline[:-1]
        b = self.centerline[1:]
        ab = b - a
        t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
        closest = a + t[:, None] * ab
        return float(np.linalg.norm(closest - p, axis=1).min())


class LaneGraph:
    def __init__(self, lanes: list[Lane]):
        self.lanes: dict[str, Lane] = {}
        for lane in lanes:
            if lane.id in self.lanes:
                raise MapParseError(f"duplicate lane id '{lane.id}'")
            self.lanes[lane.id] = lane
        dangling = sorted(
            {ref for lane in lanes for ref in lane.neighbors() if ref not in self.lanes}
        )
        if dangling:
            raise MapParseError(f"dangling lane references: {dangling}")

    def __len__(self) -> int:
        return len(self.lanes)

    def __getitem__(self, lane_id: str) -> Lane:
        return self.lanes[lane_id]

    def __iter__(self):
        return iter(self.lanes.values())


def load_vector_map(path: str | os.PathLike) -> LaneGraph:
    """Load the simplified JSON map schema:

    {"lanes": [{"id", "lane_type", "is_intersection", "centerline": [[x,y,z],..],
                "successors": [], "predecessors": [], "adjacent": []}, ...]}
    """
    try:
        data = json.loads(open(path, "r").read())
    except (OSError, json.JSONDecodeError) as e:
        raise MapParseError(f"cannot read vector map {path}: {e}") from e
    if not isinstance(data, dict) or "lanes" not in data:
        raise MapParseError(f"{path}: expected a top-level 'lanes' list")
    lanes = []
    for entry in data["lanes"]:
        try:
            lanes.append(
                Lane(
                    id=str(entry["id"]),
                    centerline=entry["centerline"],
                    lane_type=str(entry.get("lane_type", CITY_DRIVING)),
                    is_intersection=bool(entry.get("is_intersection", False)),
                    successors=[str(s) for s in entry.get("successors", [])],
                    predecessors=[str(s) for s in entry.get("predecessors", [])],
                    adjacent=[str(s) for s in entry.get("adjacent", [])],
                )
            )
        except KeyError as e:
            raise MapParseError(f"{path}: lane entry missing key {e}") from e
    return LaneGraph(lanes)


def save_vector_map(graph: LaneGraph, path: str | os.PathLike) -> None:
    data = {
        "lanes": [
            {
                "id": lane.id,
                "lane_type": lane.lane_type,
                "is_intersection": lane.is_intersection,
                "centerline": lane.centerline.tolist(),
                "successors": lane.successors,
                "predecessors": lane.predecessors,
                "adjacent": lane.adjacent,
            }
            for lane in graph
        ]
    }
    with open(path, "w") as f:
        json.dump(data, f, indent=1)


def select_intersection_lanes(graph: LaneGraph, infra_position) -> set[str]:
    """Lanes relevant to the intersection observed from ``infra_position``.

    Seed: the drivable (CITY_DRIVING) intersection lane whose centerline is
    nearest to the position. Result: breadth-first closure of the seed over
    successor/predecessor/adjacent links, restricted to CITY_DRIVING lanes.
    """
    if len(graph) == 0:
        raise LaneNotFoundError("empty lane graph")
    candidates = [l for l in graph if l.lane_type == CITY_DRIVING and l.is_intersection]
    if not candidates:
        raise LaneNotFoundError("no CITY_DRIVING intersection lane to seed from")
    seed = min(candidates, key=lambda l: l.point_distance(infra_position))

    selected = {seed.id}
    queue = [seed.id]
    while queue:
        lane = graph[queue.pop(0)]
        for ref in lane.neighbors():
            if ref in selected:
                continue
            if graph[ref].lane_type != CITY_DRIVING:
                continue
            selected.add(ref)
            queue.append(ref)
    return selected
