"""Chat-completion client adapter for externally generated trajectories.

The adapter serializes lane geometry plus the ego trajectory into a prompt,
posts a JSON chat-completion request, and parses the reply back into
keyframes under strict validation. Every failure mode (network, malformed
reply, invalid keyframes) returns an :class:`LlmFallback` so callers switch
to the rule-based generator instead of crashing.
"""

from __future__ import annotations

import importlib.resources
import json
import re
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import requests

from .lanes import Lane
from .trajectory import KEYFRAME_STRIDE, Keyframe, TrajectoryTrack

DEFAULT_TIMEOUT = 10.0
DEFAULT_MODEL = "gpt-4o"

_KEYFRAME_RE = re.compile(
    r"(\d+)\s*[,:]\s*\(?\s*(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)\s*,"
    r"\s*(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)\s*,"
    r"\s*(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)\s*\)?"
)


@dataclass
class LlmFallback:
    """Typed signal that the adapter could not produce usable keyframes."""

    reason: str


def format_ego_trajectory(track: TrajectoryTrack) -> str:
    parts = []
    for t, p in track.keyframes:
        parts.append(f"{t}, ({p[0]:.2f}, {p[1]:.2f}, {p[2]:.2f})")
    return "; ".join(parts)


def build_prompt(lanes: Sequence[Lane], ego_track: Optional[TrajectoryTrack], size, frame_count: int) -> str:
    template = importlib.resources.files("v2xsplat.traffic").joinpath("prompt_v1.txt").read_text()
    lane_lines = []
    for lane in lanes:
        s = lane.centerline[0]
        d = lane.start_direction()
        lane_lines.append(
            f"  {lane.id}: ({s[0]:.2f}, {s[1]:.2f}, {s[2]:.2f}) -> ({d[0]:.2f}, {d[1]:.2f}, {d[2]:.2f})"
        )
    ego = format_ego_trajectory(ego_track) if ego_track is not None else "(none)"
    return template.format(
        vehicle_size=f"({size[0]:.2f}, {size[1]:.2f}, {size[2]:.2f})",
        lane_descriptions="\n".join(lane_lines),
        ego_trajectory=ego,
        frame_count=frame_count,
    )


def parse_keyframe_reply(text: str) -> Union[list[Keyframe], LlmFallback]:
    """Extract and validate "t, (x, y, z)" keyframes from a model reply."""
    matches = _KEYFRAME_RE.findall(text)
    if not matches:
        return LlmFallback("reply contains no parseable keyframes")
    keyframes: list[Keyframe] = []
    prev_t = -1
    for t_str, x, y, z in matches:
        t = int(t_str)
        p = np.array([float(x), float(y), float(z)])
        if t % KEYFRAME_STRIDE != 0:
            return LlmFallback(f"keyframe t={t} is not a multiple of {KEYFRAME_STRIDE}")
        if t <= prev_t:
            return LlmFallback(f"keyframe times not strictly increasing at t={t}")
        if not np.isfinite(p).all():
            return LlmFallback(f"non-finite position at t={t}")
        keyframes.append((t, p))
        prev_t = t
    if len(keyframes) < 2:
        return LlmFallback("fewer than two valid keyframes in reply")
    return keyframes


def llm_trajectory_client(
    endpoint: str,
    lanes: Sequence[Lane],
    ego_track: Optional[TrajectoryTrack],
    size,
    model: str = DEFAULT_MODEL,
    frame_count: Optional[int] = None,
    timeout: float = DEFAULT_TIMEOUT,
    api_key: Optional[str] = None,
) -> Union[list[Keyframe], LlmFallback]:
    """Request a trajectory from a chat-completion endpoint.

    Returns validated keyframes, or an LlmFallback describing why the caller
    should use the rule-based generator. Never raises for endpoint or reply
    problems.
    """
    if frame_count is None:
        frame_count = ego_track.last_frame if ego_track is not None else 100
    prompt = build_prompt(lanes, ego_track, size, frame_count)
    payload = {
        "model": model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0.7,
    }
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    try:
        resp = requests.post(endpoint, json=payload, headers=headers, timeout=timeout)
    except requests.RequestException as e:
        return LlmFallback(f"request failed: {e}")
    if resp.status_code != 200:
        return LlmFallback(f"endpoint returned HTTP {resp.status_code}")
    try:
        body = resp.json()
        content = body["choices"][0]["message"]["content"]
    except (json.JSONDecodeError, requests.JSONDecodeError, KeyError, IndexError, TypeError) as e:
        return LlmFallback(f"malformed completion payload: {e}")
    if not isinstance(content, str):
        return LlmFallback("completion content is not text")
    return parse_keyframe_reply(content)
