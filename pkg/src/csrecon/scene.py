"""Planar 2-link arm, circular obstacles, collision checks, CS sampling, rendering.

Joint configurations are arrays (theta0, theta1) in [-pi, pi]^2; theta0 is the
shoulder angle, theta1 is the elbow angle relative to link 1. The workspace box
is [-reach, reach]^2 with reach = l1 + l2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class SceneError(ValueError):
    """Invalid scene geometry or failed scenario generation."""


@dataclass(frozen=True)
class Circle:
    """Disk obstacle: center (2,) and radius > 0."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if len(self.center) != 2:
            raise SceneError("circle center must be a 2-vector")
        if not self.radius > 0.0:
            raise SceneError(f"circle radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class RobotArm:
    """Two revolute joints, base pinned at the origin."""

    link_lengths: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if len(self.link_lengths) != 2 or any(l <= 0 for l in self.link_lengths):
            raise SceneError(f"need two positive link lengths, got {self.link_lengths}")

    @property
    def reach(self) -> float:
        return float(self.link_lengths[0] + self.link_lengths[1])


@dataclass
class Scenario:
    """A set of disk obstacles; id is unique within a dataset."""

    obstacles: tuple[Circle, ...]
    id: int = 0

    def __post_init__(self):
        self.obstacles = tuple(self.obstacles)

    def centers_radii(self) -> tuple[np.ndarray, np.ndarray]:
        """Obstacle centers (k, 2) and radii (k,); empty arrays when no obstacles."""
        if not self.obstacles:
            return np.zeros((0, 2)), np.zeros(0)
        centers = np.array([c.center for c in self.obstacles], dtype=float)
        radii = np.array([c.radius for c in self.obstacles], dtype=float)
        return centers, radii


def forward_kinematics(arm: RobotArm, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return the two link segments as (2, 2) arrays [[x0, y0], [x1, y1]]."""
    q = np.asarray(q, dtype=float)
    l1, l2 = arm.link_lengths
    elbow = np.array([l1 * np.cos(q[0]), l1 * np.sin(q[0])])
    tip = elbow + np.array([l2 * np.cos(q[0] + q[1]), l2 * np.sin(q[0] + q[1])])
    base = np.zeros(2)
    return np.stack([base, elbow]), np.stack([elbow, tip])


def _segment_points(arm: RobotArm, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Base (broadcast), elbow, tip positions for a batch of configs (n, 2)."""
    l1, l2 = arm.link_lengths
    th0 = Q[:, 0]
    th01 = Q[:, 0] + Q[:, 1]
    elbow = np.stack([l1 * np.cos(th0), l1 * np.sin(th0)], axis=1)
    tip = elbow + np.stack([l2 * np.cos(th01), l2 * np.sin(th01)], axis=1)
    base = np.zeros_like(elbow)
    return base, elbow, tip


def _segment_disk_hits(a: np.ndarray, b: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """True where segment a->b (each (n, 2)) comes within radius of center."""
    ab = b - a
    ac = center[None, :] - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.einsum("ij,ij->i", ac, ab) / np.where(denom > 0.0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * ab
    d2 = np.einsum("ij,ij->i", closest - center[None, :], closest - center[None, :])
    return d2 <= radius * radius


def collision_mask(arm: RobotArm, scenario: Scenario, Q: np.ndarray) -> np.ndarray:
    """Boolean mask over a batch of configs (n, 2): True where any link hits any obstacle."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[1] != 2:
        raise SceneError(f"config batch must have shape (n, 2), got {Q.shape}")
    base, elbow, tip = _segment_points(arm, Q)
    hit = np.zeros(len(Q), dtype=bool)
    for obs in scenario.obstacles:
        c = np.asarray(obs.center, dtype=float)
        hit |= _segment_disk_hits(base, elbow, c, obs.radius)
        hit |= _segment_disk_hits(elbow, tip, c, obs.radius)
    return hit


def in_collision(arm: RobotArm, scenario: Scenario, q: np.ndarray) -> bool:
    """Exact segment-vs-disk collision test for a single configuration."""
    return bool(collision_mask(arm, scenario, np.asarray(q, dtype=float)[None, :])[0])


def sample_configuration_space(
    arm: RobotArm, scenario: Scenario, n: int, seed
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform i.i.d. joint samples split into (free, colliding) clouds.

    Samples are rounded to float32 before classification so on-disk float32
    copies re-check identically against in_collision.
    """
    if n < 0:
        raise SceneError("sample count must be non-negative")
    rng = np.random.default_rng(seed)
    Q = rng.uniform(-np.pi, np.pi, size=(n, 2)).astype(np.float32).astype(np.float64)
    mask = collision_mask(arm, scenario, Q)
    return Q[~mask], Q[mask]


def render_scenario(arm: RobotArm, scenario: Scenario, resolution: int = 48) -> np.ndarray:
    """Rasterize a scenario to (res, res, 3) float64 in [-1, 1].

    Channel 0: obstacle occupancy, channel 1: the arm drawn at q = (0, 0),
    channel 2: background (free of both). Pixel centers sample the workspace
    box [-reach, reach]^2, row 0 at the top.
    """
    if resolution < 2:
        raise SceneError("resolution must be at least 2")
    R = arm.reach
    px = 2.0 * R / resolution
    xs = -R + (np.arange(resolution) + 0.5) * px
    ys = R - (np.arange(resolution) + 0.5) * px
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)

    obstacle = np.zeros(len(pts), dtype=bool)
    centers, radii = scenario.centers_radii()
    for c, r in zip(centers, radii):
        obstacle |= np.einsum("ij,ij->i", pts - c, pts - c) <= r * r

    # arm at rest: both links along +x, drawn with ~1.5 px stroke width
    seg1, seg2 = forward_kinematics(arm, np.zeros(2))
    half_w = 0.75 * px
    arm_mask = np.zeros(len(pts), dtype=bool)
    for a, b in (seg1, seg2):
        ab = b - a
        denom = float(ab @ ab)
        t = np.clip((pts - a) @ ab / (denom if denom > 0 else 1.0), 0.0, 1.0)
        closest = a[None, :] + t[:, None] * ab[None, :]
        d2 = np.einsum("ij,ij->i", pts - closest, pts - closest)
        arm_mask |= d2 <= half_w * half_w

    img = np.full((resolution, resolution, 3), -1.0)
    img[:, :, 0] = np.where(obstacle, 1.0, -1.0).reshape(resolution, resolution)
    img[:, :, 1] = np.where(arm_mask, 1.0, -1.0).reshape(resolution, resolution)
    img[:, :, 2] = np.where(~(obstacle | arm_mask), 1.0, -1.0).reshape(resolution, resolution)
    return img


def generate_scenario(
    arm: RobotArm,
    rng: np.random.Generator,
    num_obstacles: int = 3,
    obstacle_radius: float = 1.0,
    scenario_id: int = 0,
    max_tries: int = 1000,
) -> Scenario:
    """Draw obstacle centers uniformly over the reachable annulus, rejecting
    scenarios where the rest configuration q = (0, 0) collides."""
    l1, l2 = arm.link_lengths
    r_in, r_out = abs(l1 - l2), l1 + l2
    for _ in range(max_tries):
        u = rng.uniform(size=num_obstacles)
        radii_pos = np.sqrt(u * (r_out**2 - r_in**2) + r_in**2)
        ang = rng.uniform(0.0, TWO_PI, size=num_obstacles)
        obstacles = tuple(
            Circle((float(rp * np.cos(a)), float(rp * np.sin(a))), obstacle_radius)
            for rp, a in zip(radii_pos, ang)
        )
        cand = Scenario(obstacles, id=scenario_id)
        if not in_collision(arm, cand, np.zeros(2)):
            return cand
    raise SceneError(
        f"could not place {num_obstacles} obstacles of radius {obstacle_radius} "
        f"with a collision-free rest configuration in {max_tries} tries"
    )


@dataclass
class CsEntry:
    """One scenario with its image and sampled clouds."""

    scenario: Scenario
    image: np.ndarray        # (res, res, 3)
    free: np.ndarray         # (n_free, 2)
    collision: np.ndarray    # (n_col, 2)
    seed: int = 0            # per-scenario sampling seed (entropy spawned from the dataset seed)


@dataclass
class CsDataset:
    """A batch of scenarios with clouds and images plus the generation recipe."""

    arm: RobotArm
    entries: list[CsEntry]
    seed: int
    samples_per_scenario: int
    num_obstacles: int
    obstacle_radius: float
    resolution: int

    def __len__(self) -> int:
        return len(self.entries)


def generate_dataset(
    num_scenarios: int = 100,
    samples_per_scenario: int = 10000,
    num_obstacles: int = 3,
    obstacle_radius: float = 1.0,
    seed: int = 0,
    arm: RobotArm | None = None,
    resolution: int = 48,
    scenarios: list[Scenario] | None = None,
) -> CsDataset:
    """Generate scenarios (or take fixed ones), sample their CS, render images.

    Each scenario gets an independent child seed so generation is
    order-independent and reproducible.
    """
    arm = arm or RobotArm()
    if scenarios is not None:
        num_scenarios = len(scenarios)
    children = np.random.SeedSequence(seed).spawn(num_scenarios)
    entries = []
    for i, child in enumerate(children):
        place_seq, sample_seq = child.spawn(2)
        if scenarios is not None:
            scen = Scenario(scenarios[i].obstacles, id=i)
            if in_collision(arm, scen, np.zeros(2)):
                raise SceneError(f"fixed scenario {i} collides at the rest configuration")
        else:
            scen = generate_scenario(
                arm, np.random.default_rng(place_seq), num_obstacles, obstacle_radius,
                scenario_id=i,
            )
        sample_seed = int(sample_seq.generate_state(1)[0])
        free, col = sample_configuration_space(arm, scen, samples_per_scenario, sample_seed)
        img = render_scenario(arm, scen, resolution)
        entries.append(CsEntry(scen, img, free, col, seed=sample_seed))
    return CsDataset(
        arm=arm,
        entries=entries,
        seed=seed,
        samples_per_scenario=samples_per_scenario,
        num_obstacles=num_obstacles,
        obstacle_radius=obstacle_radius,
        resolution=resolution,
    )
