"""RRT-family planners over the 2-D joint-angle square.

Planners consume an explicit sample stream: a sampler is any callable
returning the next proposed configuration, or None when it has nothing
left. That makes every run reproducible from a seed and lets the biased
planner precompute its whole stream from a trained generator bundle
before the loop starts; when the stream runs out the query fails rather
than falling back to uniform proposals.

Steering interpolates straight lines in the square, no angle wraparound.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .scene import RobotArm, Scenario, collision_mask, in_collision, render_scenario
from .training import sample_cs_states


class PlanError(ValueError):
    """Bad query, schedule, or sampler argument."""


# ------------------------------------------------------------------ types


@dataclass(frozen=True)
class PlanQuery:
    """Start/goal pair plus the knobs every planner shares.

    time_budget is wall-clock seconds; max_iterations bounds the loop count
    so a run with a generous budget is deterministic.
    """

    x_init: tuple
    x_goal: tuple
    goal_radius: float = 0.1
    step_size: float = 0.15
    time_budget: float = 1.0
    max_iterations: int = 20000

    def __post_init__(self):
        for name in ("x_init", "x_goal"):
            q = np.asarray(getattr(self, name), dtype=float)
            if q.shape != (2,) or not np.all(np.isfinite(q)):
                raise PlanError(f"{name} must be two finite angles, got {q!r}")
        if self.goal_radius <= 0 or self.step_size <= 0:
            raise PlanError("goal_radius and step_size must be positive")
        if self.time_budget <= 0 or self.max_iterations < 1:
            raise PlanError("budgets must be positive")

    @property
    def init_array(self) -> np.ndarray:
        return np.asarray(self.x_init, dtype=float)

    @property
    def goal_array(self) -> np.ndarray:
        return np.asarray(self.x_goal, dtype=float)


@dataclass
class Tree:
    """Rooted tree; parents[0] = -1, costs hold path length to the root."""

    vertices: list = field(default_factory=list)
    parents: list = field(default_factory=list)
    costs: list = field(default_factory=list)

    def add(self, q: np.ndarray, parent: int, cost: float) -> int:
        self.vertices.append(np.asarray(q, dtype=float))
        self.parents.append(parent)
        self.costs.append(float(cost))
        return len(self.vertices) - 1

    def path_to(self, index: int) -> np.ndarray:
        chain = []
        while index >= 0:
            chain.append(self.vertices[index])
            index = self.parents[index]
        return np.stack(chain[::-1])

    def as_array(self) -> np.ndarray:
        return np.stack(self.vertices)


@dataclass
class PlanResult:
    """Path is (k, 2) from x_init to x_goal on success, None on failure."""

    success: bool
    path: np.ndarray | None
    length: float
    iterations: int
    elapsed: float
    tree: Tree


def path_length(path: np.ndarray) -> float:
    """Sum of straight segment lengths in radians."""
    p = np.asarray(path, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2 or len(p) < 1:
        raise PlanError(f"expected (k, 2) waypoints, got {p.shape}")
    return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


# --------------------------------------------------------------- samplers


def uniform_sampler(seed=0, low=-np.pi, high=np.pi):
    """Endless uniform proposals over the angle square."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    def draw():
        return rng.uniform(low, high, size=2)

    return draw


def stream_sampler(points: np.ndarray):
    """Consume a fixed (n, 2) array in order; None once exhausted."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise PlanError(f"expected (n, 2) proposals, got {pts.shape}")
    state = {"i": 0}

    def draw():
        i = state["i"]
        if i >= len(pts):
            return None
        state["i"] = i + 1
        return pts[i]

    return draw


def bias_stream(
    bundle, image: np.ndarray, schedule, t_samples: int, seed=0, source="clusters"
) -> np.ndarray:
    """Precompute the biased proposal stream.

    One block per schedule entry, in order, each drawn with that entry as
    the encoder-sigma perturbation; counts split t_samples as evenly as
    possible with the remainder on the earliest blocks.
    """
    eps = [float(e) for e in schedule]
    if not eps or eps[0] != 0.0:
        raise PlanError("schedule must start at 0")
    if any(b <= a for a, b in zip(eps, eps[1:])):
        raise PlanError("schedule must be strictly increasing")
    if t_samples < len(eps):
        raise PlanError("t_samples must cover at least one draw per level")
    base, extra = divmod(t_samples, len(eps))
    blocks = []
    for level, e in enumerate(eps):
        count = base + (1 if level < extra else 0)
        blocks.append(
            sample_cs_states(
                bundle, image, count, sigma_perturb=e, seed=seed + level,
                source=source,
            )
        )
    return np.concatenate(blocks)


# ------------------------------------------------------ collision checking


def obstacle_free_segment(
    arm: RobotArm, scenario: Scenario, qa, qb, resolution: float = 0.02
) -> bool:
    """True iff every interpolated config along qa->qb is collision-free."""
    if resolution <= 0:
        raise PlanError("resolution must be positive")
    a = np.asarray(qa, dtype=float)
    b = np.asarray(qb, dtype=float)
    steps = int(np.ceil(np.linalg.norm(b - a) / resolution))
    t = np.linspace(0.0, 1.0, steps + 1).reshape(-1, 1)
    configs = a + t * (b - a)
    return not collision_mask(arm, scenario, configs).any()


def _steer(q_near: np.ndarray, q_rand: np.ndarray, eta: float) -> np.ndarray:
    d = np.linalg.norm(q_rand - q_near)
    if d <= eta:
        return q_rand
    return q_near + (eta / d) * (q_rand - q_near)


def _nearest(tree: Tree, q: np.ndarray) -> int:
    pts = tree.as_array()
    return int(np.argmin(((pts - q) ** 2).sum(axis=1)))


# ------------------------------------------------------------------- RRT


def _check_init(arm, scenario, query):
    if in_collision(arm, scenario, query.init_array):
        raise PlanError("x_init is in collision")


def rrt(query: PlanQuery, arm: RobotArm, scenario: Scenario, sampler) -> PlanResult:
    """Standard RRT; returns the first path that reaches the goal disk."""
    _check_init(arm, scenario, query)
    goal = query.goal_array
    tree = Tree()
    tree.add(query.init_array, -1, 0.0)
    started = time.monotonic()
    iterations = 0
    while iterations < query.max_iterations:
        if time.monotonic() - started > query.time_budget:
            break
        proposal = sampler()
        if proposal is None:
            break
        iterations += 1
        near = _nearest(tree, proposal)
        q_new = _steer(tree.vertices[near], np.asarray(proposal, float), query.step_size)
        if not obstacle_free_segment(arm, scenario, tree.vertices[near], q_new):
            continue
        cost = tree.costs[near] + float(np.linalg.norm(q_new - tree.vertices[near]))
        idx = tree.add(q_new, near, cost)
        if np.linalg.norm(q_new - goal) <= query.goal_radius and obstacle_free_segment(
            arm, scenario, q_new, goal
        ):
            gidx = tree.add(goal, idx, cost + float(np.linalg.norm(goal - q_new)))
            path = tree.path_to(gidx)
            return PlanResult(
                True, path, path_length(path), iterations,
                time.monotonic() - started, tree,
            )
    return PlanResult(
        False, None, float("inf"), iterations, time.monotonic() - started, tree
    )


# ------------------------------------------------------------------ RRT*

# Shrinking-ball constant for d=2 using the full angle square's area as the
# free-measure overestimate: 2 * ((1 + 1/d) * mu / zeta_d) ** (1/d).
_GAMMA_STAR = 2.0 * np.sqrt(1.5 * (2.0 * np.pi) ** 2 / np.pi)
_REWIRE_CAP = 0.6


def _ball_radius(n: int, eta: float) -> float:
    if n < 2:
        return max(eta, _REWIRE_CAP)
    return max(eta, min(_GAMMA_STAR * np.sqrt(np.log(n) / n), _REWIRE_CAP))


def _propagate(tree: Tree, children: list, root: int, delta: float):
    stack = [root]
    while stack:
        i = stack.pop()
        tree.costs[i] -= delta
        stack.extend(children[i])


def rrt_star(
    query: PlanQuery, arm: RobotArm, scenario: Scenario, sampler
) -> PlanResult:
    """Anytime RRT*: keeps rewiring until the budget, returns the best path."""
    _check_init(arm, scenario, query)
    goal = query.goal_array
    tree = Tree()
    tree.add(query.init_array, -1, 0.0)
    children = [[]]
    goal_vertices = []
    started = time.monotonic()
    iterations = 0
    while iterations < query.max_iterations:
        if time.monotonic() - started > query.time_budget:
            break
        proposal = sampler()
        if proposal is None:
            break
        iterations += 1
        near = _nearest(tree, proposal)
        q_new = _steer(tree.vertices[near], np.asarray(proposal, float), query.step_size)
        if not obstacle_free_segment(arm, scenario, tree.vertices[near], q_new):
            continue
        pts = tree.as_array()
        dists = np.linalg.norm(pts - q_new, axis=1)
        radius = _ball_radius(len(pts), query.step_size)
        neighbors = np.flatnonzero(dists <= radius)

        parent = near
        best_cost = tree.costs[near] + float(dists[near])
        for j in neighbors:
            j = int(j)
            if j == near:
                continue
            c = tree.costs[j] + float(dists[j])
            if c < best_cost and obstacle_free_segment(
                arm, scenario, tree.vertices[j], q_new
            ):
                parent, best_cost = j, c
        idx = tree.add(q_new, parent, best_cost)
        children.append([])
        children[parent].append(idx)

        for j in neighbors:
            j = int(j)
            rewired = best_cost + float(dists[j])
            if rewired < tree.costs[j] and obstacle_free_segment(
                arm, scenario, q_new, tree.vertices[j]
            ):
                children[tree.parents[j]].remove(j)
                delta = tree.costs[j] - rewired
                tree.parents[j] = idx
                children[idx].append(j)
                _propagate(tree, children, j, delta)

        if np.linalg.norm(q_new - goal) <= query.goal_radius and obstacle_free_segment(
            arm, scenario, q_new, goal
        ):
            goal_vertices.append(idx)

    elapsed = time.monotonic() - started
    if not goal_vertices:
        return PlanResult(False, None, float("inf"), iterations, elapsed, tree)
    best = min(
        goal_vertices,
        key=lambda i: tree.costs[i] + float(np.linalg.norm(tree.vertices[i] - goal)),
    )
    path = np.concatenate([tree.path_to(best), goal.reshape(1, 2)])
    return PlanResult(True, path, path_length(path), iterations, elapsed, tree)


# ------------------------------------------------------------ biased RRT


def biased_rrt(
    query: PlanQuery,
    arm: RobotArm,
    scenario: Scenario,
    bundle,
    schedule=(0.0, 0.5, 1.0, 2.0),
    t_samples: int = 1000,
    seed=0,
    source="clusters",
    resolution: int = 48,
) -> PlanResult:
    """RRT fed by the trained generator's precomputed proposal stream.

    The stream holds t_samples proposals; a query that consumes them all
    without reaching the goal fails, there is no uniform fallback.
    """
    image = render_scenario(arm, scenario, resolution)
    stream = bias_stream(bundle, image, schedule, t_samples, seed=seed, source=source)
    return rrt(query, arm, scenario, stream_sampler(stream))


# ------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class BenchRow:
    experiment: int
    algorithm: str
    length_mean: float
    time_mean: float
    success_rate: float


def benchmark(
    arm: RobotArm,
    scenarios,
    queries,
    algorithms: dict,
    repetitions: int,
    measure_time: bool = False,
) -> list:
    """Run each algorithm repetitions times per scenario.

    algorithms maps a name to callable(query, arm, scenario, seed) ->
    PlanResult. length_mean averages successful runs only (nan when none
    succeed); time_mean stays 0.0 unless measure_time is set so reports
    are reproducible across machines.
    """
    if len(scenarios) != len(queries):
        raise PlanError("need one query per scenario")
    if repetitions < 0:
        raise PlanError("repetitions must be >= 0")
    rows = []
    if repetitions == 0:
        return rows
    for scenario, query in zip(scenarios, queries):
        for name, algo in algorithms.items():
            results = [algo(query, arm, scenario, rep) for rep in range(repetitions)]
            lengths = [r.length for r in results if r.success]
            rows.append(
                BenchRow(
                    experiment=scenario.id,
                    algorithm=name,
                    length_mean=float(np.mean(lengths)) if lengths else float("nan"),
                    time_mean=(
                        float(np.mean([r.elapsed for r in results]))
                        if measure_time
                        else 0.0
                    ),
                    success_rate=float(np.mean([r.success for r in results])),
                )
            )
    return rows
