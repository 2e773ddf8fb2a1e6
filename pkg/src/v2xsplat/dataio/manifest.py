"""Scene manifest: one JSON file wiring together every per-frame input.

Schema (paths are relative to the manifest's directory):

{
  "n_frames": 20,
  "semantic_classes": 0,
  "ego_id": "ego_vehicle",
  "vector_map": "map.json",                  // optional
  "views": {
    "ego": {
      "cameras": [<camera dict> per frame],
      "image":   ["ego/image/frame_000000.png", ...],
      "depth":   [...],     // optional, PFM
      "normal":  [...],     // optional, PFM
      "sky":     [...],     // optional, PNG mask
      "semantic":[...],     // optional, PNG labels (255 = ignore)
      "ego_mask":[...]      // ego view only, PNG mask
    },
    "infrastructure": { ... }
  },
  "lidar": [
    {"frame": 0, "sensor": "ego", "path": "lidar/ego_000000.ply",
     "sensor_to_world": [[...4x4...]]},
    ...
  ],
  "tracks": [ <BoxTrack dict>, ... ]
}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from ..camera import Camera
from ..errors import ManifestError
from .boxes import BoxTrack

_OPTIONAL_LAYERS = ("depth", "normal", "sky", "semantic", "ego_mask")


@dataclass
class LidarSweep:
    frame: int
    sensor: str
    path: Path
    sensor_to_world: np.ndarray


@dataclass
class SceneManifest:
    root: Path
    n_frames: int
    cameras: dict[str, list[Camera]]
    images: dict[str, list[Path]]
    layers: dict[str, dict[str, list[Optional[Path]]]]  # view -> layer -> per-frame path
    lidar: list[LidarSweep]
    tracks: dict[str, BoxTrack]
    ego_id: Optional[str] = None
    vector_map: Optional[Path] = None
    semantic_classes: int = 0
    extras: dict = field(default_factory=dict)


def load_manifest(path: str | os.PathLike) -> SceneManifest:
    """Load and validate a scene manifest.

    Raises ManifestError enumerating every missing referenced file, and
    rejects manifests whose camera and image dimensions disagree.
    """
    mpath = Path(path)
    try:
        data = json.loads(mpath.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e
    root = mpath.parent

    try:
        n_frames = int(data["n_frames"])
        views = data["views"]
    except KeyError as e:
        raise ManifestError(f"manifest missing key {e}") from e
    if n_frames <= 0:
        raise ManifestError("manifest: n_frames must be positive")

    missing: list[str] = []

    def resolve(rel: Optional[str]) -> Optional[Path]:
        if rel is None:
            return None
        p = root / rel
        if not p.exists():
            missing.append(str(rel))
        return p

    cameras: dict[str, list[Camera]] = {}
    images: dict[str, list[Path]] = {}
    layers: dict[str, dict[str, list[Optional[Path]]]] = {}
    for view, vd in views.items():
        cams = [Camera.from_dict(c) for c in vd.get("cameras", [])]
        if len(cams) != n_frames:
            raise ManifestError(f"manifest: view '{view}' has {len(cams)} cameras for {n_frames} frames")
        img_list = vd.get("image", [])
        if len(img_list) != n_frames:
            raise ManifestError(f"manifest: view '{view}' has {len(img_list)} images for {n_frames} frames")
        cameras[view] = cams
        images[view] = [resolve(p) for p in img_list]
        layers[view] = {}
        for layer in _OPTIONAL_LAYERS:
            paths = vd.get(layer)
            if paths is None:
                continue
            if len(paths) != n_frames:
                raise ManifestError(f"manifest: view '{view}' layer '{layer}' length != n_frames")
            layers[view][layer] = [resolve(p) for p in paths]

    lidar = []
    for entry in data.get("lidar", []):
        lidar.append(
            LidarSweep(
                frame=int(entry["frame"]),
                sensor=str(entry.get("sensor", "unknown")),
                path=resolve(entry["path"]),
                sensor_to_world=np.asarray(entry.get("sensor_to_world", np.eye(4).tolist()), dtype=np.float64),
            )
        )
        if lidar[-1].sensor_to_world.shape != (4, 4):
            raise ManifestError(f"manifest: lidar entry frame {entry['frame']} transform is not 4x4")

    tracks = {}
    for td in data.get("tracks", []):
        track = BoxTrack.from_dict(td)
        tracks[track.object_id] = track

    vector_map = resolve(data["vector_map"]) if data.get("vector_map") else None

    if missing:
        raise ManifestError(f"manifest references missing files: {sorted(set(missing))}")

    # Camera/image dimension agreement.
    for view, cams in cameras.items():
        with Image.open(images[view][0]) as im:
            w, h = im.size
        for f, cam in enumerate(cams):
            if (cam.width, cam.height) != (w, h):
                raise ManifestError(
                    f"manifest: view '{view}' frame {f} camera is {cam.width}x{cam.height} "
                    f"but images are {w}x{h}"
                )

    return SceneManifest(
        root=root,
        n_frames=n_frames,
        cameras=cameras,
        images=images,
        layers=layers,
        lidar=lidar,
        tracks=tracks,
        ego_id=data.get("ego_id"),
        vector_map=vector_map,
        semantic_classes=int(data.get("semantic_classes", 0)),
        extras={k: v for k, v in data.items() if k not in
                ("n_frames", "views", "lidar", "tracks", "ego_id", "vector_map", "semantic_classes")},
    )
