"""pUCT tree search over a learned world model.

The search owns per-edge statistics N (visits), Q (mean return), P (prior)
and R (model reward), selects with the standard prior-weighted UCT rule

    score(a) = Q(s,a) + P(s,a) * sqrt(sum_b N(s,b)) / (1 + N(s,a))
                       * (c1 + log((sum_b N(s,b) + c2 + 1) / c2))

and backs up running means Q <- (N*Q + G) / (N + 1), N <- N + 1 with the
discounted return G taken from each depth's perspective.

Choices that make the search auditable for exact equivariance:

* ties in the argmax are resolved uniformly at random from the caller's
  RngStream, so paired runs with a transported stream break ties to
  corresponding actions;
* the root is expanded before the first simulation and not counted, so
  root visits always sum to the budget;
* unvisited edges carry Q = 0;
* Dirichlet root noise (training only) and min-max Q normalisation are
  both off by default.

A model is anything with ``n_actions``, ``root(obs) -> (latent, prior,
value)`` and ``step(latent, action) -> (latent, reward, prior, value)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rngs import RngStream


@dataclass(frozen=True)
class MCTSConfig:
    budget: int = 50
    c1: float = 1.25
    c2: float = 19652.0
    discount: float = 0.99
    root_noise: bool = False
    dirichlet_alpha: float = 0.3
    dirichlet_fraction: float = 0.25
    q_normalize: bool = False

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ValueError(f"budget must be at least 1, got {self.budget}")
        if not (0.0 <= self.discount <= 1.0):
            raise ValueError(f"discount must lie in [0, 1], got {self.discount}")
        if self.c1 <= 0.0 or self.c2 <= 0.0:
            raise ValueError(f"c1 and c2 must be positive, got {self.c1}, {self.c2}")


class Node:
    """Search-tree node: a latent plus per-action edge statistics."""

    __slots__ = ("latent", "prior", "value", "n", "q", "r", "children")

    def __init__(self, latent, prior: np.ndarray, value: float):
        a = prior.shape[0]
        self.latent = latent
        self.prior = np.asarray(prior, dtype=np.float64)
        self.value = float(value)
        self.n = np.zeros(a, dtype=np.int64)
        self.q = np.zeros(a, dtype=np.float64)
        self.r = np.zeros(a, dtype=np.float64)
        self.children: dict[int, Node] = {}


class _MinMax:
    """Running min/max of backed-up Q values across the whole tree."""

    __slots__ = ("lo", "hi")

    def __init__(self):
        self.lo = math.inf
        self.hi = -math.inf

    def update(self, q: float) -> None:
        self.lo = min(self.lo, q)
        self.hi = max(self.hi, q)

    def normalize(self, q: np.ndarray) -> np.ndarray:
        if self.hi > self.lo:
            return (q - self.lo) / (self.hi - self.lo)
        return q


@dataclass(frozen=True)
class SimRecord:
    """What one simulation did: its path, returns, and the updated edge stats."""

    path: tuple[int, ...]
    returns: tuple[float, ...]
    leaf_value: float
    updated_n: tuple[int, ...]
    updated_q: tuple[float, ...]


@dataclass
class SearchResult:
    visit_dist: np.ndarray
    root_value: float
    root: Node
    sims: list[SimRecord] = field(default_factory=list)

    @property
    def trace(self) -> list[str]:
        """Line-per-simulation text trace; field order is stable so paired runs diff cleanly."""
        lines = []
        for t, rec in enumerate(self.sims):
            lines.append(
                f"sim={t:03d}"
                f" path={','.join(str(a) for a in rec.path)}"
                f" leaf={_fmt(rec.leaf_value)}"
                f" returns={','.join(_fmt(g) for g in rec.returns)}"
                f" n={','.join(str(n) for n in rec.updated_n)}"
                f" q={','.join(_fmt(q) for q in rec.updated_q)}"
            )
        return lines


def puct_scores(node: Node, config: MCTSConfig, minmax: _MinMax | None = None) -> np.ndarray:
    total = node.n.sum()
    q = node.q
    if minmax is not None:
        q = np.where(node.n > 0, minmax.normalize(node.q), 0.0)
    explore = (
        node.prior
        * (math.sqrt(total) / (1.0 + node.n))
        * (config.c1 + math.log((total + config.c2 + 1.0) / config.c2))
    )
    return q + explore


def select_action_puct(
    node: Node, config: MCTSConfig, rng: RngStream, minmax: _MinMax | None = None
) -> int:
    """Argmax of the pUCT score; exact ties drawn uniformly from the stream."""
    scores = puct_scores(node, config, minmax)
    ties = np.flatnonzero(scores == scores.max())
    return rng.choose_action([int(a) for a in ties])


def compute_return(rewards, leaf_value: float, discount: float) -> float:
    """Discounted sum of the rewards plus the discounted bootstrap at the leaf."""
    g = float(leaf_value)
    for r in reversed(list(rewards)):
        g = float(r) + discount * g
    return g


def backup(
    path: list[tuple[Node, int]], leaf_value: float, discount: float,
    minmax: _MinMax | None = None,
) -> list[float]:
    """Update (N, Q) along the path root->leaf; returns the per-depth returns."""
    if not path:
        raise ValueError("backup needs a nonempty path")
    rewards = [node.r[a] for node, a in path]
    returns = [
        compute_return(rewards[d:], leaf_value, discount) for d in range(len(path))
    ]
    for (node, a), g in zip(path, returns):
        node.q[a] = (node.n[a] * node.q[a] + g) / (node.n[a] + 1)
        node.n[a] += 1
        if minmax is not None:
            minmax.update(float(node.q[a]))
    return returns


def _fmt(x: float) -> str:
    return repr(float(x))


def run_search(model, obs: np.ndarray, config: MCTSConfig, rng: RngStream) -> SearchResult:
    """Plan from an observation: budget simulations of select/expand/backup."""
    latent, prior, value = model.root(obs)
    if config.root_noise:
        noise = rng.dirichlet(config.dirichlet_alpha, prior.shape[0])
        prior = (1.0 - config.dirichlet_fraction) * prior + config.dirichlet_fraction * noise
    root = Node(latent, prior, value)
    minmax = _MinMax() if config.q_normalize else None
    sims: list[SimRecord] = []

    for _ in range(config.budget):
        node = root
        path: list[tuple[Node, int]] = []
        while True:
            a = select_action_puct(node, config, rng, minmax)
            path.append((node, a))
            child = node.children.get(a)
            if child is None:
                break
            node = child
        parent, a = path[-1]
        child_latent, reward, child_prior, child_value = model.step(parent.latent, a)
        parent.r[a] = reward
        parent.children[a] = Node(child_latent, child_prior, child_value)
        returns = backup(path, child_value, config.discount, minmax)
        sims.append(
            SimRecord(
                path=tuple(act for _, act in path),
                returns=tuple(returns),
                leaf_value=child_value,
                updated_n=tuple(int(n.n[act]) for n, act in path),
                updated_q=tuple(float(n.q[act]) for n, act in path),
            )
        )

    total = root.n.sum()
    visit_dist = root.n / total
    root_value = float((visit_dist * root.q).sum())
    return SearchResult(visit_dist=visit_dist, root_value=root_value, root=root, sims=sims)


def sample_action(visit_counts: np.ndarray, temperature: float, rng: RngStream) -> int:
    """Act from root visit counts: argmax at temperature 0, else ~ N^(1/T)."""
    counts = np.asarray(visit_counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0 or counts.sum() <= 0:
        raise ValueError("visit counts must be a nonempty 1-d array with positive sum")
    if temperature < 0.0:
        raise ValueError(f"temperature must be nonnegative, got {temperature}")
    if temperature == 0.0:
        ties = np.flatnonzero(counts == counts.max())
        return rng.choose_action([int(a) for a in ties])
    weights = (counts / counts.sum()) ** (1.0 / temperature)
    return rng.sample_weighted_action(range(counts.size), weights)
