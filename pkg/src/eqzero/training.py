"""Self-play data generation and gradient training of the world model.

One process, one optimizer, deterministic from the config seeds: episodes
are played with tree-search action selection (root noise on, temperature
schedule), stored in a bounded replay buffer, and consumed by unrolled
model losses — cross-entropy of the policy against the stored visit
distributions, squared error for value against n-step returns and for
reward against observed rewards.
"""

from __future__ import annotations

import dataclasses
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import env as envm
from . import nd
from .mcts import MCTSConfig, run_search, sample_action
from .rngs import RngStream, derive_seed
from .worldmodel import ModelConfig, WorldModel


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    unroll_steps: int = 5          # K: transitions per training position
    batch_size: int = 32
    n_step: int = 5                # bootstrap horizon for value targets
    w_policy: float = 1.0
    w_value: float = 0.25
    w_reward: float = 1.0
    total_steps: int = 200
    replay_capacity: int = 500     # trajectories
    steps_per_episode: int = 4     # optimizer steps between self-play episodes
    temperature_cutoff: float = 0.5  # fraction of steps acting at temperature 1
    checkpoint_every: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.unroll_steps < 1:
            raise ValueError(f"unroll length must be at least 1, got {self.unroll_steps}")
        for name in ("w_policy", "w_value", "w_reward"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.n_step < 1 or self.batch_size < 1 or self.total_steps < 1:
            raise ValueError("n_step, batch_size and total_steps must be positive")


@dataclass
class Trajectory:
    """One episode of experience, all sequences step-aligned."""

    observations: list[np.ndarray]
    actions: list[int]
    rewards: list[float]
    visit_dists: list[np.ndarray]
    root_values: list[float]

    def __post_init__(self) -> None:
        n = len(self.observations)
        for name in ("actions", "rewards", "visit_dists", "root_values"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"trajectory field {name} has length "
                                 f"{len(getattr(self, name))}, expected {n}")

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def episode_return(self) -> float:
        return float(sum(self.rewards))


class ReplayBuffer:
    """Bounded trajectory store with uniform sampling of (trajectory, index) pairs."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._items: deque[Trajectory] = deque()

    def __len__(self) -> int:
        return len(self._items)

    @property
    def n_positions(self) -> int:
        return sum(len(t) for t in self._items)

    def add(self, traj: Trajectory) -> None:
        if len(traj) == 0:
            raise ValueError("cannot store an empty trajectory")
        self._items.append(traj)
        while len(self._items) > self.capacity:
            self._items.popleft()

    def sample(self, batch_size: int, rng: RngStream) -> list[tuple[Trajectory, int]]:
        total = self.n_positions
        if total == 0:
            raise ValueError("replay buffer is empty")
        lengths = [len(t) for t in self._items]
        bounds = np.cumsum(lengths)
        out = []
        for _ in range(batch_size):
            u = rng.integer(total)
            ti = int(np.searchsorted(bounds, u, side="right"))
            start = u - (bounds[ti - 1] if ti > 0 else 0)
            out.append((self._items[ti], int(start)))
        return out


def self_play_episode(
    adapter,
    env_config: envm.EnvConfig,
    maze: envm.MazeMap,
    mcts_config: MCTSConfig,
    temperature: float,
    env_rng: RngStream,
    search_rng: RngStream,
) -> Trajectory:
    """Play one episode acting through the tree search; record everything."""
    state = envm.reset(env_config, maze, env_rng)
    if envm.is_terminal(env_config, state):
        raise ValueError("environment is terminal immediately after reset")
    observations, actions, rewards, dists, values = [], [], [], [], []
    while not envm.is_terminal(env_config, state):
        obs = envm.observe(state)
        result = run_search(adapter, obs, mcts_config, search_rng)
        action = sample_action(result.root.n, temperature, search_rng)
        state, reward, done = envm.step(env_config, state, action)
        observations.append(obs)
        actions.append(int(action))
        rewards.append(float(reward))
        dists.append(result.visit_dist.copy())
        values.append(result.root_value)
        if done:
            break
    return Trajectory(observations, actions, rewards, dists, values)


@dataclass
class UnrollTargets:
    """Targets for one (trajectory, start) pair over K unroll steps.

    actions feeds the model's transitions (k = 1..K); positions past episode
    end are absorbing: uniform policy target, zero reward and value, with
    the last real action repeated as the transition input.
    """

    actions: np.ndarray        # (K,) int
    policy: np.ndarray         # (K+1, A)
    value: np.ndarray          # (K+1,)
    reward: np.ndarray         # (K,)


def make_targets(traj: Trajectory, t: int, unroll: int, n_step: int, discount: float) -> UnrollTargets:
    horizon = len(traj)
    if not (0 <= t < horizon):
        raise ValueError(f"start index {t} outside trajectory of length {horizon}")
    n_actions = traj.visit_dists[0].shape[0]
    uniform = np.full(n_actions, 1.0 / n_actions)

    def value_target(i: int) -> float:
        if i >= horizon:
            return 0.0
        g = 0.0
        for j in range(n_step):
            if i + j >= horizon:
                return g
            g += (discount ** j) * traj.rewards[i + j]
        if i + n_step < horizon:
            g += (discount ** n_step) * traj.root_values[i + n_step]
        return g

    actions = np.array(
        [traj.actions[min(t + k, horizon - 1)] for k in range(unroll)], dtype=np.int64
    )
    policy = np.stack(
        [traj.visit_dists[t + k] if t + k < horizon else uniform for k in range(unroll + 1)]
    )
    value = np.array([value_target(t + k) for k in range(unroll + 1)])
    reward = np.array(
        [traj.rewards[t + k] if t + k < horizon else 0.0 for k in range(unroll)]
    )
    return UnrollTargets(actions=actions, policy=policy, value=value, reward=reward)


_CE_FLOOR = 1e-30  # guards log against softmax underflow; gradient is 0 there


def _cross_entropy(pred: nd.Tensor, target: np.ndarray) -> nd.Tensor:
    """Mean over the batch of -sum_a target[a] * log(pred[a])."""
    logp = nd.log(nd.clip_min(pred, _CE_FLOOR))
    weighted = nd.mul(logp, nd.tensor(target))
    return nd.scale(nd.sum_total(weighted), -1.0 / pred.shape[0])


def _mse(pred: nd.Tensor, target: np.ndarray) -> nd.Tensor:
    diff = nd.sub(pred, nd.tensor(target))
    return nd.mean_total(nd.mul(diff, diff))


def loss_batch(
    model: WorldModel,
    batch: list[tuple[Trajectory, int]],
    config: TrainConfig,
    discount: float,
) -> tuple[nd.Tensor, dict[str, float]]:
    """Unrolled training loss for a batch of (trajectory, start) pairs."""
    if not batch:
        raise ValueError("empty batch")
    targets = [make_targets(tr, t, config.unroll_steps, config.n_step, discount) for tr, t in batch]
    obs = nd.tensor(np.stack([tr.observations[t] for tr, t in batch]))
    actions = np.stack([tg.actions for tg in targets], axis=1)   # (K, B)
    policy_t = np.stack([tg.policy for tg in targets], axis=1)   # (K+1, B, A)
    value_t = np.stack([tg.value for tg in targets], axis=1)     # (K+1, B)
    reward_t = np.stack([tg.reward for tg in targets], axis=1)   # (K, B)

    loss_p = _cross_entropy(model.policy(z := model.encode_observation(obs)), policy_t[0])
    loss_v = _mse(model.value(z), value_t[0])
    loss_r: nd.Tensor | None = None
    for k in range(1, config.unroll_steps + 1):
        z_in = model.inject_action(z, actions[k - 1])
        step_r = _mse(model.reward(z_in), reward_t[k - 1])
        loss_r = step_r if loss_r is None else nd.add(loss_r, step_r)
        z = model.transition(z_in)
        loss_p = nd.add(loss_p, _cross_entropy(model.policy(z), policy_t[k]))
        loss_v = nd.add(loss_v, _mse(model.value(z), value_t[k]))
    assert loss_r is not None
    total = nd.add(
        nd.add(nd.scale(loss_p, config.w_policy), nd.scale(loss_v, config.w_value)),
        nd.scale(loss_r, config.w_reward),
    )
    parts = {
        "loss_total": total.item(),
        "loss_p": loss_p.item(),
        "loss_v": loss_v.item(),
        "loss_r": loss_r.item(),
    }
    return total, parts


class Adam:
    """Adaptive moment estimation with bias correction, fixed update order."""

    def __init__(self, params: dict[str, nd.Tensor], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name in sorted(self.params):
            p = self.params[name]
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (self.m[name] / b1c) / (np.sqrt(self.v[name] / b2c) + self.eps)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, checkpoint_path: Path | None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


METRICS_HEADER = "step,loss_total,loss_p,loss_v,loss_r,selfplay_return"


@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics_path: Path
    model: WorldModel
    final_loss: float


def train(
    variant: str,
    model_config: ModelConfig,
    env_config: envm.EnvConfig,
    mcts_config: MCTSConfig,
    train_config: TrainConfig,
    maps: list[envm.MazeMap],
    out_dir: str | Path,
) -> TrainResult:
    """Alternate self-play and optimization; emit metrics CSV and checkpoints."""
    if not maps:
        raise ValueError("need at least one training map")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / "checkpoint.ckpt"
    metrics_path = out / "metrics.csv"

    model = WorldModel.initialize(model_config, variant, train_config.seed)
    adapter = model.adapter()
    opt = Adam(model.params, train_config.learning_rate)
    replay = ReplayBuffer(train_config.replay_capacity)
    replay_rng = RngStream(derive_seed(train_config.seed, 7))
    selfplay_cfg = dataclasses.replace(mcts_config, root_noise=True)

    rows = [METRICS_HEADER]
    episode_index = 0
    last_return = 0.0
    wrote_checkpoint = False
    final_loss = float("nan")

    def save() -> None:
        nonlocal wrote_checkpoint
        model.save(ckpt_path, extra_meta={"train_steps": str(step)})
        wrote_checkpoint = True

    step = 0
    for step in range(1, train_config.total_steps + 1):
        temperature = 1.0 if step <= train_config.temperature_cutoff * train_config.total_steps else 0.0
        if (step - 1) % train_config.steps_per_episode == 0 or len(replay) == 0:
            maze = maps[episode_index % len(maps)]
            traj = self_play_episode(
                adapter, env_config, maze, selfplay_cfg, temperature,
                env_rng=RngStream(derive_seed(train_config.seed, 11, episode_index)),
                search_rng=RngStream(derive_seed(train_config.seed, 13, episode_index)),
            )
            replay.add(traj)
            last_return = traj.episode_return
            episode_index += 1

        batch = replay.sample(train_config.batch_size, replay_rng)
        opt.zero_grad()
        total, parts = loss_batch(model, batch, train_config, mcts_config.discount)
        if not np.isfinite(parts["loss_total"]):
            metrics_path.write_text("\n".join(rows) + "\n")
            raise TrainingDiverged(
                f"non-finite loss {parts['loss_total']} at step {step}",
                ckpt_path if wrote_checkpoint else None,
            )
        nd.backward(total)
        opt.step()
        if any(not np.isfinite(p.data).all() for p in model.params.values()):
            metrics_path.write_text("\n".join(rows) + "\n")
            raise TrainingDiverged(
                f"non-finite parameters after step {step}",
                ckpt_path if wrote_checkpoint else None,
            )
        final_loss = parts["loss_total"]
        rows.append(
            f"{step},{parts['loss_total']!r},{parts['loss_p']!r},"
            f"{parts['loss_v']!r},{parts['loss_r']!r},{last_return!r}"
        )
        if step % train_config.checkpoint_every == 0:
            save()

    save()
    metrics_path.write_text("\n".join(rows) + "\n")
    return TrainResult(checkpoint_path=ckpt_path, metrics_path=metrics_path,
                       model=model, final_loss=final_loss)
