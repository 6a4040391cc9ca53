"""A deterministic grid-world whose dynamics commute exactly with rotation.

An agent collects food in a procedurally generated maze while ghosts chase
it. Every rule is written so that rotating the full state and the action
gives the rotated successor state with the identical reward and termination
flag — bit-exactly, for all reachable states. The one place this is easy to
get wrong is ghost tie-breaking, which therefore works in the ghost's
*relative* frame (continue, relative-right, relative-left, reverse) rather
than any fixed compass order.

States are immutable values; ``step`` returns a fresh state.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .groups import (
    C4,
    DIR_VECTORS,
    GroupElement,
    N_DIRECTIONS,
    act_on_action,
    act_on_observation,
    rotate_cell,
)
from .rngs import Cell, RngStream, derive_seed

OBS_CHANNELS = 4  # walls, food, agent, ghosts — fixed order


@dataclass(frozen=True)
class EnvConfig:
    side: int = 14
    n_ghosts: int = 1
    food_reward: float = 1.0
    completion_bonus: float = 5.0
    caught_penalty: float = -5.0
    step_cap: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.side < 5:
            raise ValueError(f"side must be at least 5, got {self.side}")
        if self.step_cap < 1:
            raise ValueError(f"step cap must be at least 1, got {self.step_cap}")
        if self.n_ghosts < 0:
            raise ValueError(f"ghost count must be nonnegative, got {self.n_ghosts}")


@dataclass(frozen=True, eq=False)
class MazeMap:
    """Square wall mask; True means wall. Border cells are always walls."""

    walls: np.ndarray

    @property
    def side(self) -> int:
        return int(self.walls.shape[0])

    def corridor_cells(self) -> list[Cell]:
        rs, cs = np.nonzero(~self.walls)
        return [(int(r), int(c)) for r, c in zip(rs, cs)]

    def is_corridor(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.side and 0 <= c < self.side and not self.walls[r, c]

    def to_text(self) -> str:
        return "\n".join("".join("#" if w else "." for w in row) for row in self.walls) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MazeMap":
        rows = [line for line in text.splitlines() if line]
        side = len(rows)
        if side == 0 or any(len(row) != side for row in rows):
            raise ValueError("maze text must be a non-empty square of '#'/'.' rows")
        if any(ch not in "#." for row in rows for ch in row):
            raise ValueError("maze text may contain only '#' and '.'")
        walls = np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)
        return cls(walls)


def maze_equal(a: MazeMap, b: MazeMap) -> bool:
    return a.walls.shape == b.walls.shape and bool(np.array_equal(a.walls, b.walls))


def rotate_maze(g: GroupElement, maze: MazeMap) -> MazeMap:
    return MazeMap(act_on_observation(g, maze.walls))


def canonical_form(maze: MazeMap) -> bytes:
    """Lexicographic minimum over the four rotations of the wall mask."""
    return min(
        act_on_observation(g, maze.walls).astype(np.uint8).tobytes() for g in C4
    )


def generate_maze(seed: int, side: int) -> MazeMap:
    """Recursive-backtracker maze on the odd lattice, walls elsewhere.

    Deterministic in the seed; corridors form a single connected component;
    the border is all walls (for even sides the last row/column stays wall).
    """
    if side < 5:
        raise ValueError(f"side must be at least 5, got {side}")
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    m = side if side % 2 == 1 else side - 1
    n = (m - 1) // 2
    walls = np.ones((side, side), dtype=bool)
    visited = np.zeros((n, n), dtype=bool)
    start = (int(gen.integers(n)), int(gen.integers(n)))
    visited[start] = True
    walls[2 * start[0] + 1, 2 * start[1] + 1] = False
    stack = [start]
    while stack:
        i, j = stack[-1]
        nbrs = [
            (i + di, j + dj)
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1))
            if 0 <= i + di < n and 0 <= j + dj < n and not visited[i + di, j + dj]
        ]
        if not nbrs:
            stack.pop()
            continue
        ni, nj = nbrs[int(gen.integers(len(nbrs)))]
        visited[ni, nj] = True
        walls[2 * ni + 1, 2 * nj + 1] = False
        walls[i + ni + 1, j + nj + 1] = False  # knock out the wall between the cells
        stack.append((ni, nj))
    return MazeMap(walls)


@dataclass(frozen=True)
class Ghost:
    pos: Cell
    heading: int  # previous move direction, used for relative-frame tie-breaks


@dataclass(frozen=True, eq=False)
class EnvState:
    maze: MazeMap
    agent: Cell
    ghosts: tuple[Ghost, ...]
    food: np.ndarray  # bool mask over cells; food lives only on corridors
    steps: int


def states_equal(a: EnvState, b: EnvState) -> bool:
    return (
        maze_equal(a.maze, b.maze)
        and a.agent == b.agent
        and a.ghosts == b.ghosts
        and bool(np.array_equal(a.food, b.food))
        and a.steps == b.steps
    )


def reset(config: EnvConfig, maze: MazeMap, rng: int | RngStream) -> EnvState:
    """Place the agent and ghosts on seed-chosen corridor cells, food everywhere else."""
    if not isinstance(rng, RngStream):
        rng = RngStream(int(rng))
    corridors = maze.corridor_cells()
    if len(corridors) < 1 + config.n_ghosts:
        raise ValueError(
            f"maze has {len(corridors)} corridor cells, need {1 + config.n_ghosts} for occupants"
        )
    shape = (maze.side, maze.side)
    agent = rng.choose_cell(corridors, shape)
    free = [c for c in corridors if c != agent]
    ghosts = []
    for _ in range(config.n_ghosts):
        pos = rng.choose_cell(free, shape)
        free = [c for c in free if c != pos]
        heading = rng.choose_action(range(N_DIRECTIONS))
        ghosts.append(Ghost(pos, heading))
    food = ~maze.walls.copy()
    food[agent] = False
    for gh in ghosts:
        food[gh.pos] = False
    return EnvState(maze=maze, agent=agent, ghosts=tuple(ghosts), food=food, steps=0)


def is_terminal(config: EnvConfig, state: EnvState) -> bool:
    return (
        state.steps >= config.step_cap
        or not bool(state.food.any())
        or any(gh.pos == state.agent for gh in state.ghosts)
    )


def _ghost_move(maze: MazeMap, ghost: Ghost, agent: Cell) -> Ghost:
    legal = []
    for d in range(N_DIRECTIONS):
        dr, dc = DIR_VECTORS[d]
        tgt = (ghost.pos[0] + dr, ghost.pos[1] + dc)
        if maze.is_corridor(tgt):
            legal.append((d, tgt))
    if not legal:
        return ghost
    dists = {d: abs(t[0] - agent[0]) + abs(t[1] - agent[1]) for d, t in legal}
    best = min(dists.values())
    candidates = {d for d, dist in dists.items() if dist == best}
    h = ghost.heading
    # Relative-frame preference: continue, relative-right, relative-left, reverse.
    for d in (h, (h + 1) % 4, (h + 3) % 4, (h + 2) % 4):
        if d in candidates:
            dr, dc = DIR_VECTORS[d]
            return Ghost((ghost.pos[0] + dr, ghost.pos[1] + dc), d)
    raise AssertionError("unreachable: candidate set is a nonempty subset of directions")


def step(config: EnvConfig, state: EnvState, action: int) -> tuple[EnvState, float, bool]:
    """Advance one tick: agent move, food, ghost moves, terminal checks.

    Blocked moves are silent no-ops. Walking into a ghost, or a ghost
    walking into the agent, ends the episode with the caught penalty;
    eating the last food ends it with the completion bonus; hitting the
    step cap ends it with no extra reward.
    """
    action = int(action)
    if not (0 <= action < N_DIRECTIONS):
        raise ValueError(f"action must be a directional move 0..3, got {action}")
    if is_terminal(config, state):
        raise ValueError("cannot step a finished episode")

    dr, dc = DIR_VECTORS[action]
    tgt = (state.agent[0] + dr, state.agent[1] + dc)
    agent = tgt if state.maze.is_corridor(tgt) else state.agent
    steps = state.steps + 1
    reward = 0.0

    if any(gh.pos == agent for gh in state.ghosts):
        nxt = replace(state, agent=agent, steps=steps)
        return nxt, config.caught_penalty, True

    food = state.food
    if food[agent]:
        food = food.copy()
        food[agent] = False
        reward += config.food_reward
        if not food.any():
            nxt = replace(state, agent=agent, food=food, steps=steps)
            return nxt, reward + config.completion_bonus, True

    ghosts = tuple(_ghost_move(state.maze, gh, agent) for gh in state.ghosts)
    done = False
    if any(gh.pos == agent for gh in ghosts):
        reward += config.caught_penalty
        done = True
    elif steps >= config.step_cap:
        done = True
    nxt = EnvState(maze=state.maze, agent=agent, ghosts=ghosts, food=food, steps=steps)
    return nxt, reward, done


def rotate_state(g: GroupElement, state: EnvState) -> EnvState:
    """Rotate every grid, position, and heading by the same group element."""
    shape = (state.maze.side, state.maze.side)
    agent, _ = rotate_cell(g, state.agent, shape)
    ghosts = tuple(
        Ghost(rotate_cell(g, gh.pos, shape)[0], act_on_action(g, gh.heading))
        for gh in state.ghosts
    )
    return EnvState(
        maze=rotate_maze(g, state.maze),
        agent=agent,
        ghosts=ghosts,
        food=act_on_observation(g, state.food),
        steps=state.steps,
    )


def observe(state: EnvState) -> np.ndarray:
    """Multi-channel grid: walls, food, agent, ghosts, in that order."""
    side = state.maze.side
    obs = np.zeros((OBS_CHANNELS, side, side), dtype=np.float64)
    obs[0] = state.maze.walls
    obs[1] = state.food
    obs[2][state.agent] = 1.0
    for gh in state.ghosts:
        obs[3][gh.pos] += 1.0
    return obs


# ---------------------------------------------------------------------------
# map splits: training maps X, their rotations RX, disjoint evaluation maps Y


@dataclass(frozen=True)
class Splits:
    seed: int
    side: int
    x: tuple[MazeMap, ...]
    y: tuple[MazeMap, ...]
    x_seeds: tuple[int, ...]
    y_seeds: tuple[int, ...]

    def rotated(self) -> list[tuple[int, GroupElement, MazeMap]]:
        """All three nontrivial rotations of every training map, with provenance."""
        return [
            (i, g, rotate_maze(g, maze))
            for i, maze in enumerate(self.x)
            for g in C4
            if g.k != 0
        ]


def make_splits(seed: int, n_train: int, n_eval: int, side: int) -> Splits:
    """Generate X and a Y whose canonical forms avoid every canonical form of X."""
    x_seeds = [derive_seed(seed, 0, i) for i in range(n_train)]
    x = [generate_maze(s, side) for s in x_seeds]
    taken = {canonical_form(m) for m in x}
    y: list[MazeMap] = []
    y_seeds: list[int] = []
    attempts = 0
    max_attempts = 1000 + 200 * max(n_eval, 1)
    while len(y) < n_eval:
        if attempts >= max_attempts:
            raise RuntimeError(
                f"maze generator exhausted after {attempts} attempts: "
                f"found {len(y)}/{n_eval} evaluation maps disjoint from the "
                f"{n_train} training maps at side {side}"
            )
        cand_seed = derive_seed(seed, 1, attempts)
        attempts += 1
        cand = generate_maze(cand_seed, side)
        key = canonical_form(cand)
        if key in taken:
            continue
        taken.add(key)
        y.append(cand)
        y_seeds.append(cand_seed)
    return Splits(
        seed=seed, side=side, x=tuple(x), y=tuple(y),
        x_seeds=tuple(x_seeds), y_seeds=tuple(y_seeds),
    )


MANIFEST_NAME = "manifest.txt"


def save_splits(out_dir: str | Path, splits: Splits) -> list[Path]:
    """Write map files plus a manifest; identical splits produce identical bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    lines = ["# eqzero map split v1", f"seed {splits.seed}", f"side {splits.side}"]
    for tag, mazes, seeds in (("x", splits.x, splits.x_seeds), ("y", splits.y, splits.y_seeds)):
        for i, (maze, mseed) in enumerate(zip(mazes, seeds)):
            name = f"{tag}_{i:03d}.txt"
            path = out / name
            path.write_text(maze.to_text())
            written.append(path)
            lines.append(f"{tag} {name} {mseed}")
    manifest = out / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n")
    written.append(manifest)
    return written


def load_splits(in_dir: str | Path) -> Splits:
    root = Path(in_dir)
    manifest = root / MANIFEST_NAME
    if not manifest.exists():
        raise FileNotFoundError(f"no split manifest at {manifest}")
    seed = side = None
    x, y, x_seeds, y_seeds = [], [], [], []
    for line in manifest.read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if fields[0] == "seed":
            seed = int(fields[1])
        elif fields[0] == "side":
            side = int(fields[1])
        elif fields[0] in ("x", "y"):
            maze = MazeMap.from_text((root / fields[1]).read_text())
            (x if fields[0] == "x" else y).append(maze)
            (x_seeds if fields[0] == "x" else y_seeds).append(int(fields[2]))
        else:
            raise ValueError(f"unknown manifest record {line!r} in {manifest}")
    if seed is None or side is None:
        raise ValueError(f"manifest {manifest} is missing seed/side headers")
    return Splits(
        seed=seed, side=side, x=tuple(x), y=tuple(y),
        x_seeds=tuple(x_seeds), y_seeds=tuple(y_seeds),
    )
