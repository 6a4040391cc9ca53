"""Experiment orchestration: configs, the same/rotated/different evaluation
protocol, and the paired-search equivariance audit.

Evaluation pairing: a rotated-setting episode reuses the base seeds of its
source episode with both the reset stream and the search stream transported
through the rotation, so for a fully equivariant agent the two episodes are
step-for-step mirror images and their returns are equal, not merely close.

The audit runs the same search twice — once on an observation, once on its
rotation with a transported stream — and demands exact agreement of every
visit count, value, prior and selected action under the action relabelling.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import env as envm
from .groups import C4, GroupElement, act_on_observation, action_permutation
from .mcts import MCTSConfig, Node, SearchResult, run_search, sample_action
from .rngs import RngStream, derive_seed, rng_transport
from .training import TrainConfig
from .worldmodel import ModelConfig, VARIANTS, WorldModel

SETTINGS = ("same", "rotated", "different")


@dataclass(frozen=True)
class RunConfig:
    variant: str = "EqMuZero"
    seed: int = 0
    split_seed: int = 7
    n_train_maps: int = 5
    n_eval_maps: int = 5
    eval_seeds: int = 7      # evaluation episodes per map per setting
    out_dir: str = "runs/default"

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")


@dataclass(frozen=True)
class ExperimentConfig:
    env: envm.EnvConfig = envm.EnvConfig()
    model: ModelConfig = ModelConfig()
    mcts: MCTSConfig = MCTSConfig()
    train: TrainConfig = TrainConfig()
    run: RunConfig = RunConfig()


_SECTIONS = ("env", "model", "mcts", "train", "run")


def _coerce(raw: str, typ) -> object:
    if typ is bool:
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean from {raw!r}")
    return typ(raw)


def _apply_overrides(section_obj, overrides: dict[str, str]):
    types = {f.name: f.type for f in dataclasses.fields(section_obj)}
    concrete = {f.name: type(getattr(section_obj, f.name)) for f in dataclasses.fields(section_obj)}
    del types
    kwargs = {}
    for key, raw in overrides.items():
        if key not in concrete:
            raise KeyError(f"unknown config field {key!r} for section "
                           f"[{type(section_obj).__name__}]")
        kwargs[key] = _coerce(raw, concrete[key])
    return dataclasses.replace(section_obj, **kwargs)


def config_from_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    parser = configparser.ConfigParser()
    parser.read_string(text)
    sections = {}
    for name in _SECTIONS:
        obj = getattr(base, name)
        if parser.has_section(name):
            obj = _apply_overrides(obj, dict(parser.items(name)))
        sections[name] = obj
    for extra in parser.sections():
        if extra not in _SECTIONS:
            raise KeyError(f"unknown config section [{extra}]")
    return ExperimentConfig(**sections)


def config_to_text(config: ExperimentConfig) -> str:
    parser = configparser.ConfigParser()
    for name in _SECTIONS:
        obj = getattr(config, name)
        parser.add_section(name)
        for f in dataclasses.fields(obj):
            parser.set(name, f.name, repr(getattr(obj, f.name)) if isinstance(
                getattr(obj, f.name), float) else str(getattr(obj, f.name)))
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def apply_sets(config: ExperimentConfig, sets: list[str]) -> ExperimentConfig:
    """Apply `section.field=value` overrides from the command line."""
    grouped: dict[str, dict[str, str]] = {}
    for item in sets:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} is not of the form section.field=value")
        section, dot, field = key.partition(".")
        if not dot or section not in _SECTIONS:
            raise ValueError(f"override key {key!r} must start with one of {_SECTIONS}")
        grouped.setdefault(section, {})[field.strip()] = value.strip()
    sections = {}
    for name in _SECTIONS:
        obj = getattr(config, name)
        if name in grouped:
            obj = _apply_overrides(obj, grouped[name])
        sections[name] = obj
    return ExperimentConfig(**sections)


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EpisodeRecord:
    variant: str
    setting: str
    map_index: int
    rotation: int          # group element k; 0 for unrotated settings
    seed_index: int
    episode_return: float
    steps: int


def run_episode(
    adapter,
    env_config: envm.EnvConfig,
    maze: envm.MazeMap,
    mcts_config: MCTSConfig,
    reset_rng: RngStream,
    search_rng: RngStream,
    temperature: float = 0.0,
) -> tuple[float, int]:
    """One evaluation episode; greedy by default (temperature 0, no noise)."""
    state = envm.reset(env_config, maze, reset_rng)
    total = 0.0
    steps = 0
    while not envm.is_terminal(env_config, state):
        obs = envm.observe(state)
        result = run_search(adapter, obs, mcts_config, search_rng)
        action = sample_action(result.root.n, temperature, search_rng)
        state, reward, done = envm.step(env_config, state, action)
        total += reward
        steps += 1
        if done:
            break
    return total, steps


def evaluate(
    model: WorldModel,
    splits: envm.Splits,
    env_config: envm.EnvConfig,
    mcts_config: MCTSConfig,
    n_seeds: int,
    seed: int,
) -> list[EpisodeRecord]:
    """Greedy episodes on X (same), RX (rotated, seed-paired with X) and Y."""
    eval_cfg = dataclasses.replace(mcts_config, root_noise=False)
    adapter = model.adapter()
    records: list[EpisodeRecord] = []

    def seeds(map_index: int, seed_index: int) -> tuple[int, int]:
        return (
            derive_seed(seed, 11, map_index, seed_index),
            derive_seed(seed, 12, map_index, seed_index),
        )

    for i, maze in enumerate(splits.x):
        for j in range(n_seeds):
            rs, ss = seeds(i, j)
            ret, steps = run_episode(
                adapter, env_config, maze, eval_cfg, RngStream(rs), RngStream(ss)
            )
            records.append(EpisodeRecord(model.variant, "same", i, 0, j, ret, steps))

    for i, g, rmaze in splits.rotated():
        for j in range(n_seeds):
            rs, ss = seeds(i, j)
            ret, steps = run_episode(
                adapter, env_config, rmaze, eval_cfg,
                rng_transport(g, RngStream(rs)), rng_transport(g, RngStream(ss)),
            )
            records.append(EpisodeRecord(model.variant, "rotated", i, g.k, j, ret, steps))

    for i, maze in enumerate(splits.y):
        for j in range(n_seeds):
            rs = derive_seed(seed, 13, i, j)
            ss = derive_seed(seed, 14, i, j)
            ret, steps = run_episode(
                adapter, env_config, maze, eval_cfg, RngStream(rs), RngStream(ss)
            )
            records.append(EpisodeRecord(model.variant, "different", i, 0, j, ret, steps))

    return records


EPISODES_HEADER = "variant,setting,map_index,rotation,seed_index,episode_return,steps"
REPORT_HEADER = "variant,setting,mean_return,std_return,episodes"


def episodes_csv(records: list[EpisodeRecord]) -> str:
    lines = [EPISODES_HEADER]
    for r in records:
        lines.append(
            f"{r.variant},{r.setting},{r.map_index},{r.rotation},"
            f"{r.seed_index},{r.episode_return!r},{r.steps}"
        )
    return "\n".join(lines) + "\n"


def report_csv(records: list[EpisodeRecord]) -> str:
    lines = [REPORT_HEADER]
    variants = sorted({r.variant for r in records})
    for variant in variants:
        for setting in SETTINGS:
            returns = [r.episode_return for r in records
                       if r.variant == variant and r.setting == setting]
            if not returns:
                continue
            arr = np.array(returns)
            lines.append(
                f"{variant},{setting},{float(arr.mean())!r},{float(arr.std())!r},{len(arr)}"
            )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# equivariance audit


@dataclass(frozen=True)
class AuditCase:
    case_index: int
    rotation: int
    passed: bool
    detail: str = ""


@dataclass
class AuditReport:
    variant: str
    cases: list[AuditCase]

    @property
    def n_pass(self) -> int:
        return sum(c.passed for c in self.cases)

    @property
    def n_fail(self) -> int:
        return len(self.cases) - self.n_pass

    def to_text(self, budget: int, seed: int) -> str:
        lines = [
            "# eqzero audit v1",
            f"variant {self.variant}",
            f"cases {len(self.cases)} budget {budget} seed {seed}",
        ]
        for c in self.cases:
            status = "pass" if c.passed else f"fail {c.detail}"
            lines.append(f"case={c.case_index:03d} g={c.rotation} {status}")
        lines.append(f"summary pass={self.n_pass} fail={self.n_fail}")
        return "\n".join(lines) + "\n"


def _compare_trees(a: Node, b: Node, g: GroupElement, n_actions: int, depth: int) -> str:
    """First divergence between tree b and the g-relabelling of tree a, or ''. """
    perm = action_permutation(g, n_actions)
    for arr_a, arr_b, field in ((a.n, b.n, "N"), (a.q, b.q, "Q"),
                                (a.r, b.r, "R"), (a.prior, b.prior, "P")):
        for act in range(n_actions):
            if arr_a[act] != arr_b[perm[act]]:
                return f"depth={depth} field={field} action={act}"
    if a.value != b.value:
        return f"depth={depth} field=value"
    mapped = {int(perm[act]) for act in a.children}
    if mapped != set(b.children):
        return f"depth={depth} field=children"
    for act, child in sorted(a.children.items()):
        diff = _compare_trees(child, b.children[int(perm[act])], g, n_actions, depth + 1)
        if diff:
            return diff
    return ""


def compare_searches(
    base: SearchResult, rotated: SearchResult, g: GroupElement, n_actions: int
) -> str:
    """First divergence between paired searches, or '' when exactly equivariant."""
    perm = action_permutation(g, n_actions)
    for sim, (rec_a, rec_b) in enumerate(zip(base.sims, rotated.sims)):
        mapped = [int(perm[a]) for a in rec_a.path]
        if mapped != list(rec_b.path):
            depth = min(len(rec_a.path), len(rec_b.path))
            for d, (x, y) in enumerate(zip(mapped, rec_b.path)):
                if x != y:
                    depth = d
                    break
            return f"sim={sim:03d} depth={depth} field=action"
        if rec_a.returns != rec_b.returns:
            depth = next(d for d, (x, y) in enumerate(zip(rec_a.returns, rec_b.returns)) if x != y)
            return f"sim={sim:03d} depth={depth} field=return"
    for act in range(n_actions):
        if base.visit_dist[act] != rotated.visit_dist[perm[act]]:
            return f"final field=visit_dist action={act}"
    tree_diff = _compare_trees(base.root, rotated.root, g, n_actions, depth=0)
    if tree_diff:
        return f"tree {tree_diff}"
    return ""


def _audit_observation(model: WorldModel, env_config: envm.EnvConfig, seed: int, case: int) -> np.ndarray:
    """A deterministic random reachable observation: reset plus a short walk."""
    maze = envm.generate_maze(derive_seed(seed, 21, case), env_config.side)
    state = envm.reset(env_config, maze, RngStream(derive_seed(seed, 22, case)))
    walk = RngStream(derive_seed(seed, 23, case))
    for _ in range(walk.integer(9)):
        if envm.is_terminal(env_config, state):
            break
        action = walk.choose_action(range(4))
        state, _, done = envm.step(env_config, state, action)
        if done:
            break
    return envm.observe(state)


def audit_model(
    model: WorldModel,
    env_config: envm.EnvConfig,
    mcts_config: MCTSConfig,
    n_cases: int,
    seed: int,
) -> AuditReport:
    """Paired searches over n_cases observations x all four rotations."""
    audit_cfg = dataclasses.replace(mcts_config, root_noise=False)
    adapter = model.adapter()
    n_actions = model.config.n_actions
    cases: list[AuditCase] = []
    for case in range(n_cases):
        obs = _audit_observation(model, env_config, seed, case)
        search_seed = derive_seed(seed, 24, case)
        base = run_search(adapter, obs, audit_cfg, RngStream(search_seed))
        for g in C4:
            rotated = run_search(
                adapter,
                act_on_observation(g, obs),
                audit_cfg,
                rng_transport(g, RngStream(search_seed)),
            )
            detail = compare_searches(base, rotated, g, n_actions)
            if not detail:
                act_seed = derive_seed(seed, 25, case)
                a0 = sample_action(base.root.n, 0.0, RngStream(act_seed))
                a1 = sample_action(
                    rotated.root.n, 0.0, rng_transport(g, RngStream(act_seed))
                )
                perm = action_permutation(g, n_actions)
                if int(perm[a0]) != a1:
                    detail = "final field=greedy_action"
            cases.append(AuditCase(case, g.k, passed=not detail, detail=detail))
    return AuditReport(variant=model.variant, cases=cases)
