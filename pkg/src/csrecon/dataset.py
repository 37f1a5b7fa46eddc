"""On-disk dataset format: one JSON-lines header plus raw float32 blobs.

Layout of a dataset directory:

    dataset.jsonl     first line: dataset metadata; one line per scenario after
    cs_<id>.f32       free cloud, row-major (n, 2) little-endian float32
    col_<id>.f32      colliding cloud, same layout
    img_<id>.f32      image, row-major (res, res, 3) little-endian float32

All JSON is written with sorted keys and fixed separators so a load/save
round-trip is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .scene import Circle, CsDataset, CsEntry, RobotArm, Scenario

FORMAT_NAME = "cs-dataset-v1"


class DatasetError(ValueError):
    """Malformed or inconsistent dataset directory."""


def dumps_canonical(obj) -> str:
    """Canonical one-line JSON: sorted keys, no spaces."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_f32(path: Path, arr: np.ndarray) -> None:
    np.asarray(arr, dtype="<f4").tofile(path)


def _read_f32(path: Path, columns: int) -> np.ndarray:
    raw = np.fromfile(path, dtype="<f4")
    if columns > 0 and len(raw) % columns != 0:
        raise DatasetError(f"{path.name}: length {len(raw)} not divisible by {columns}")
    return raw.reshape(-1, columns).astype(np.float64)


def save_dataset(ds: CsDataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        dumps_canonical(
            {
                "format": FORMAT_NAME,
                "link_lengths": [float(l) for l in ds.arm.link_lengths],
                "num_obstacles": int(ds.num_obstacles),
                "num_scenarios": len(ds.entries),
                "obstacle_radius": float(ds.obstacle_radius),
                "resolution": int(ds.resolution),
                "samples_per_scenario": int(ds.samples_per_scenario),
                "seed": int(ds.seed),
            }
        )
    ]
    for e in ds.entries:
        sid = e.scenario.id
        lines.append(
            dumps_canonical(
                {
                    "id": sid,
                    "n_collision": int(len(e.collision)),
                    "n_free": int(len(e.free)),
                    "obstacles": [
                        [float(c.center[0]), float(c.center[1]), float(c.radius)]
                        for c in e.scenario.obstacles
                    ],
                    "seed": e.seed,
                }
            )
        )
        _write_f32(out / f"cs_{sid}.f32", e.free)
        _write_f32(out / f"col_{sid}.f32", e.collision)
        _write_f32(out / f"img_{sid}.f32", e.image.reshape(-1, 3))
    (out / "dataset.jsonl").write_text("\n".join(lines) + "\n")
    return out


def load_dataset(in_dir) -> CsDataset:
    src = Path(in_dir)
    header = src / "dataset.jsonl"
    if not header.is_file():
        raise DatasetError(f"no dataset.jsonl in {src}")
    lines = header.read_text().splitlines()
    if not lines:
        raise DatasetError("empty dataset.jsonl")
    meta = json.loads(lines[0])
    if meta.get("format") != FORMAT_NAME:
        raise DatasetError(f"unknown dataset format {meta.get('format')!r}")
    arm = RobotArm(tuple(meta["link_lengths"]))
    res = int(meta["resolution"])
    entries = []
    for line in lines[1:]:
        rec = json.loads(line)
        sid = int(rec["id"])
        obstacles = tuple(Circle((x, y), r) for x, y, r in rec["obstacles"])
        free = _read_f32(src / f"cs_{sid}.f32", 2)
        col = _read_f32(src / f"col_{sid}.f32", 2)
        img = _read_f32(src / f"img_{sid}.f32", 3).reshape(res, res, 3)
        if len(free) != rec["n_free"] or len(col) != rec["n_collision"]:
            raise DatasetError(f"scenario {sid}: cloud sizes disagree with header")
        entries.append(CsEntry(Scenario(obstacles, id=sid), img, free, col, seed=int(rec["seed"])))
    return CsDataset(
        arm=arm,
        entries=entries,
        seed=int(meta["seed"]),
        samples_per_scenario=int(meta["samples_per_scenario"]),
        num_obstacles=int(meta["num_obstacles"]),
        obstacle_radius=float(meta["obstacle_radius"]),
        resolution=res,
    )
