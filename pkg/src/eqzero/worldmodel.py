"""World-model networks: encoder, transition, policy, reward, value.

The latent state is a 4-tuple of equally shaped (N, C, H, W) feature maps;
a 90-degree clockwise rotation of the input acts on it purely by cyclic
permutation of the components. The equivariant construction:

* encoder      component i = h(rot_i(x)) + broadcast(g_emb[rot_i(a)]),
               h one shared CNN, g_emb one learned row per action;
* transition   either one shared tau applied per component, or a shared tau
               over all four components presented in the four cyclic orders;
* policy       P(a|z) = mean_i pi(rot_i(a) | z_i), pi a shared MLP+softmax;
* reward/value heads on the elementwise sum of the four components.

Wherever the four components are summed or averaged, the four operands are
sorted numerically before adding (nd.sorted_sum), which makes the reduction
a function of the operand multiset and hence the invariances bit-exact.

Baseline ("std") counterparts have the same shapes with none of the tying:
a plain ResNet encoder/transition over the stacked channels and MLPs over
the pooled concatenation, so rotations relate their outputs only by
accident. Agent variants mix the two families per the dispatch table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nd
from .checkpoint import load_checkpoint, save_checkpoint
from .groups import N_DIRECTIONS, action_permutation, GroupElement

LatentState = tuple[nd.Tensor, nd.Tensor, nd.Tensor, nd.Tensor]

VARIANTS = (
    "EqMuZero",
    "StdMuZero",
    "StdWithEqEncoder",
    "EqWithStdEncoder",
    "EqWithStdPolicy",
)

# Which components use the equivariant implementation, per variant.
_DISPATCH: dict[str, dict[str, bool]] = {
    "EqMuZero": dict(encoder=True, transition=True, policy=True, heads=True),
    "StdMuZero": dict(encoder=False, transition=False, policy=False, heads=False),
    "StdWithEqEncoder": dict(encoder=True, transition=False, policy=False, heads=False),
    "EqWithStdEncoder": dict(encoder=False, transition=True, policy=True, heads=True),
    "EqWithStdPolicy": dict(encoder=True, transition=True, policy=False, heads=True),
}


@dataclass(frozen=True)
class ModelConfig:
    obs_channels: int = 4
    obs_size: int = 14
    n_actions: int = 4
    channels: int = 16          # per latent component
    hidden: int = 32            # MLP hidden width for the pi/rho/v heads
    transition_mode: str = "constrained"  # or "interacting"

    def __post_init__(self) -> None:
        if self.transition_mode not in ("constrained", "interacting"):
            raise ValueError(f"unknown transition mode {self.transition_mode!r}")
        if self.n_actions < N_DIRECTIONS:
            raise ValueError("need at least the four directional actions")


def _conv_spec(name: str, cout: int, cin: int, k: int = 3):
    return [
        (f"{name}.w", (cout, cin, k, k), cin * k * k, cout * k * k),
        (f"{name}.b", (cout,), 0, 0),
    ]


def _dense_spec(name: str, fan_in: int, fan_out: int):
    return [
        (f"{name}.w", (fan_in, fan_out), fan_in, fan_out),
        (f"{name}.b", (fan_out,), 0, 0),
    ]


def _resblock_spec(name: str, c: int):
    return _conv_spec(f"{name}.c0", c, c) + _conv_spec(f"{name}.c1", c, c)


def _mlp_spec(name: str, fan_in: int, hidden: int, fan_out: int):
    return _dense_spec(f"{name}.l0", fan_in, hidden) + _dense_spec(f"{name}.l1", hidden, fan_out)


def parameter_spec(config: ModelConfig, variant: str) -> list[tuple[str, tuple[int, ...], int, int]]:
    """Names, shapes and fans of every tensor the variant needs, in creation order."""
    if variant not in _DISPATCH:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    d = _DISPATCH[variant]
    c, a = config.channels, config.n_actions
    spec: list[tuple[str, tuple[int, ...], int, int]] = []
    if d["encoder"]:
        spec += _conv_spec("eq.h.c0", c, config.obs_channels)
        spec += _conv_spec("eq.h.c1", c, c)
        spec += _conv_spec("eq.h.c2", c, c)
        spec += [("eq.g.emb", (a, c), a, c)]
    else:
        spec += _conv_spec("std.enc.c0", 4 * c, config.obs_channels)
        spec += _resblock_spec("std.enc.r0", 4 * c)
        spec += _resblock_spec("std.enc.r1", 4 * c)
        spec += [("std.g.emb", (a, 4 * c), a, 4 * c)]
    if d["transition"]:
        if config.transition_mode == "interacting":
            spec += _conv_spec("eq.tau.in", c, 4 * c)
        spec += _resblock_spec("eq.tau.r0", c)
        spec += _resblock_spec("eq.tau.r1", c)
    else:
        spec += _resblock_spec("std.tau.r0", 4 * c)
        spec += _resblock_spec("std.tau.r1", 4 * c)
    if d["policy"]:
        spec += _mlp_spec("eq.pi", c, config.hidden, a)
    else:
        spec += _mlp_spec("std.pi", 4 * c, config.hidden, a)
    if d["heads"]:
        spec += _mlp_spec("eq.rho", c, config.hidden, 1)
        spec += _mlp_spec("eq.v", c, config.hidden, 1)
    else:
        spec += _mlp_spec("std.rho", 4 * c, config.hidden, 1)
        spec += _mlp_spec("std.v", 4 * c, config.hidden, 1)
    return spec


class WorldModel:
    """Parameters plus the forward functions for one agent variant."""

    def __init__(self, config: ModelConfig, variant: str, params: dict[str, nd.Tensor]):
        if variant not in _DISPATCH:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        self.config = config
        self.variant = variant
        self.params = params
        self.dispatch = _DISPATCH[variant]
        # Action relabelling per component, reused on every policy/inject call.
        self._perms = [action_permutation(GroupElement(i), config.n_actions) for i in range(4)]

    # -- construction -------------------------------------------------------

    @classmethod
    def initialize(cls, config: ModelConfig, variant: str, seed: int) -> "WorldModel":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        params: dict[str, nd.Tensor] = {}
        for name, shape, fan_in, fan_out in parameter_spec(config, variant):
            if name.endswith(".b"):
                data = np.zeros(shape, dtype=np.float64)
            else:
                data = nd.glorot_uniform(shape, rng, fan_in, fan_out)
            params[name] = nd.tensor(data, requires_grad=True)
        return cls(config, variant, params)

    def save(self, path, extra_meta: dict[str, str] | None = None) -> None:
        meta = {
            "variant": self.variant,
            "obs_channels": str(self.config.obs_channels),
            "obs_size": str(self.config.obs_size),
            "n_actions": str(self.config.n_actions),
            "channels": str(self.config.channels),
            "hidden": str(self.config.hidden),
            "transition_mode": self.config.transition_mode,
        }
        meta.update(extra_meta or {})
        save_checkpoint(path, {k: v.data for k, v in self.params.items()}, meta)

    @classmethod
    def load(cls, path) -> "WorldModel":
        tensors, meta = load_checkpoint(path)
        config = ModelConfig(
            obs_channels=int(meta["obs_channels"]),
            obs_size=int(meta["obs_size"]),
            n_actions=int(meta["n_actions"]),
            channels=int(meta["channels"]),
            hidden=int(meta["hidden"]),
            transition_mode=meta["transition_mode"],
        )
        params = {k: nd.tensor(v, requires_grad=True) for k, v in tensors.items()}
        return cls(config, meta["variant"], params)

    # -- small helpers ------------------------------------------------------

    def _p(self, name: str) -> nd.Tensor:
        try:
            return self.params[name]
        except KeyError:
            raise KeyError(f"variant {self.variant!r} has no parameter {name!r}") from None

    def _conv(self, name: str, x: nd.Tensor) -> nd.Tensor:
        return nd.conv2d(x, self._p(f"{name}.w"), self._p(f"{name}.b"))

    def _resblock(self, name: str, x: nd.Tensor) -> nd.Tensor:
        return nd.residual_block(
            x, self._p(f"{name}.c0.w"), self._p(f"{name}.c0.b"),
            self._p(f"{name}.c1.w"), self._p(f"{name}.c1.b"),
        )

    def _mlp(self, name: str, x: nd.Tensor) -> nd.Tensor:
        h = nd.relu(nd.dense(x, self._p(f"{name}.l0.w"), self._p(f"{name}.l0.b")))
        return nd.dense(h, self._p(f"{name}.l1.w"), self._p(f"{name}.l1.b"))

    @staticmethod
    def _as_batch(x) -> nd.Tensor:
        t = x if isinstance(x, nd.Tensor) else nd.tensor(x)
        if t.ndim == 3:
            t = nd.reshape(t, (1,) + t.shape)
        if t.ndim != 4:
            raise nd.ShapeError(f"observation must be (C,H,W) or (N,C,H,W), got {t.shape}")
        return t

    def _action_ids(self, actions, n: int) -> np.ndarray:
        ids = np.asarray(actions, dtype=np.int64).reshape(-1)
        if ids.shape == (1,) and n > 1:
            ids = np.full(n, ids[0], dtype=np.int64)
        if ids.shape != (n,):
            raise nd.ShapeError(f"need {n} action ids, got shape {ids.shape}")
        if ids.min() < 0 or ids.max() >= self.config.n_actions:
            raise ValueError(f"action ids out of range 0..{self.config.n_actions - 1}")
        return ids

    # -- encoder ------------------------------------------------------------

    def encode_observation(self, x) -> LatentState:
        """Latent of the observation alone (the action term of the encoder omitted)."""
        xb = self._as_batch(x)
        if self.dispatch["encoder"]:
            rots = [nd.rot90(xb, i) for i in range(4)]
            h = nd.concat_batch(rots)
            for layer in ("eq.h.c0", "eq.h.c1", "eq.h.c2"):
                h = nd.relu(self._conv(layer, h))
            return tuple(nd.split_batch(h, 4))  # type: ignore[return-value]
        return self.baseline_encode_observation(xb)

    def inject_action(self, z: LatentState, actions) -> LatentState:
        """Add the (per-component rotated) action embedding onto every pixel."""
        n = z[0].shape[0]
        ids = self._action_ids(actions, n)
        if self.dispatch["encoder"]:
            emb = self._p("eq.g.emb")
            out = []
            for i in range(4):
                rows = nd.gather_rows(emb, self._perms[i][ids])
                out.append(nd.add_channel_bias(z[i], rows))
            return tuple(out)  # type: ignore[return-value]
        rows = nd.gather_rows(self._p("std.g.emb"), ids)
        c = self.config.channels
        return tuple(
            nd.add_channel_bias(z[i], nd.slice_cols(rows, i * c, (i + 1) * c)) for i in range(4)
        )  # type: ignore[return-value]

    def encode(self, x, actions) -> LatentState:
        """Joint state-action embedding: component i = h(rot_i x) + g(rot_i a)."""
        return self.inject_action(self.encode_observation(x), actions)

    # -- transitions ---------------------------------------------------------

    def transition_constrained(self, z: LatentState) -> LatentState:
        """One shared tau applied to each component independently."""
        h = nd.concat_batch(list(z))
        h = self._resblock("eq.tau.r0", h)
        h = self._resblock("eq.tau.r1", h)
        return tuple(nd.split_batch(h, 4))  # type: ignore[return-value]

    def transition_interacting(self, z: LatentState) -> LatentState:
        """Shared tau over all four components, presented in the four cyclic orders."""
        stacks = [nd.concat_channels([z[(i + j) % 4] for j in range(4)]) for i in range(4)]
        h = nd.relu(self._conv("eq.tau.in", nd.concat_batch(stacks)))
        h = self._resblock("eq.tau.r0", h)
        h = self._resblock("eq.tau.r1", h)
        return tuple(nd.split_batch(h, 4))  # type: ignore[return-value]

    def transition(self, z: LatentState) -> LatentState:
        if self.dispatch["transition"]:
            if self.config.transition_mode == "interacting":
                return self.transition_interacting(z)
            return self.transition_constrained(z)
        return self.baseline_transition(z)

    # -- heads ---------------------------------------------------------------

    def policy(self, z: LatentState) -> nd.Tensor:
        """Distribution over actions, shape (N, n_actions), rows sum to 1."""
        if self.dispatch["policy"]:
            pooled = nd.mean_hw(nd.concat_batch(list(z)))
            probs = nd.softmax(self._mlp("eq.pi", pooled))
            per_comp = nd.split_batch(probs, 4)
            aligned = [nd.gather_cols(per_comp[i], self._perms[i]) for i in range(4)]
            return nd.scale(nd.sorted_sum(aligned), 0.25)
        return self.baseline_policy(z)

    def reward(self, z: LatentState) -> nd.Tensor:
        """Scalar per sample, shape (N,)."""
        if self.dispatch["heads"]:
            pooled = nd.mean_hw(nd.sorted_sum(list(z)))
            return nd.reshape(self._mlp("eq.rho", pooled), (z[0].shape[0],))
        return self.baseline_reward(z)

    def value(self, z: LatentState) -> nd.Tensor:
        if self.dispatch["heads"]:
            pooled = nd.mean_hw(nd.sorted_sum(list(z)))
            return nd.reshape(self._mlp("eq.v", pooled), (z[0].shape[0],))
        return self.baseline_value(z)

    # -- baseline family ------------------------------------------------------

    def baseline_encode_observation(self, x) -> LatentState:
        xb = self._as_batch(x)
        h = nd.relu(self._conv("std.enc.c0", xb))
        h = self._resblock("std.enc.r0", h)
        h = self._resblock("std.enc.r1", h)
        return tuple(nd.split_channels(h, 4))  # type: ignore[return-value]

    def baseline_transition(self, z: LatentState) -> LatentState:
        h = nd.concat_channels(list(z))
        h = self._resblock("std.tau.r0", h)
        h = self._resblock("std.tau.r1", h)
        return tuple(nd.split_channels(h, 4))  # type: ignore[return-value]

    def _pooled_concat(self, z: LatentState) -> nd.Tensor:
        return nd.mean_hw(nd.concat_channels(list(z)))

    def baseline_policy(self, z: LatentState) -> nd.Tensor:
        return nd.softmax(self._mlp("std.pi", self._pooled_concat(z)))

    def baseline_reward(self, z: LatentState) -> nd.Tensor:
        return nd.reshape(self._mlp("std.rho", self._pooled_concat(z)), (z[0].shape[0],))

    def baseline_value(self, z: LatentState) -> nd.Tensor:
        return nd.reshape(self._mlp("std.v", self._pooled_concat(z)), (z[0].shape[0],))

    # -- search-facing adapter -------------------------------------------------

    def adapter(self) -> "PlanningAdapter":
        return PlanningAdapter(self)


def latent_data(z: Sequence[nd.Tensor]) -> tuple[np.ndarray, ...]:
    return tuple(t.data for t in z)


class PlanningAdapter:
    """The two-callable surface the tree search plans through.

    root() embeds an observation and predicts its priors/value; step() applies
    one action: inject the embedding, read the reward off the injected latent
    (the pre-transition state-action embedding), advance with tau, then read
    priors/value off the successor. All under no_grad.
    """

    def __init__(self, model: WorldModel):
        self.model = model

    @property
    def n_actions(self) -> int:
        return self.model.config.n_actions

    def root(self, obs: np.ndarray):
        with nd.no_grad():
            z = self.model.encode_observation(obs)
            prior = self.model.policy(z).data[0].copy()
            value = float(self.model.value(z).data[0])
        return z, prior, value

    def step(self, latent: LatentState, action: int):
        with nd.no_grad():
            z_in = self.model.inject_action(latent, int(action))
            reward = float(self.model.reward(z_in).data[0])
            child = self.model.transition(z_in)
            prior = self.model.policy(child).data[0].copy()
            value = float(self.model.value(child).data[0])
        return child, reward, prior, value
