"""Deterministic random streams, plus the group-transport wrapper.

Randomness enters the system only through these streams, and only via typed
draws (an action from a candidate set, a cell from a candidate set, a
weighted action, raw uniforms). Typed draws canonicalise their candidates
before consuming entropy, which is what makes the transport wrapper exact:
``transport(g, rng)`` maps action- and cell-valued draws through g while
consuming the underlying stream identically, so a run on a rotated problem
paired with a transported stream makes mirror-image random choices.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .groups import GroupElement, act_on_action, inverse, rotate_cell

Cell = tuple[int, int]


def derive_seed(*keys: int) -> int:
    """A stable 64-bit seed from a tuple of integer keys."""
    a, b = np.random.SeedSequence([int(k) for k in keys]).generate_state(2)
    return int(a) | (int(b) << 32)


class RngStream:
    """Seeded stream with typed draws; identical seeds yield identical sequences."""

    def __init__(self, seed: int | np.random.SeedSequence):
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(int(seed))
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(self) -> float:
        return float(self._gen.random())

    def integer(self, n: int) -> int:
        if n <= 0:
            raise ValueError(f"need a positive range, got {n}")
        return int(self._gen.integers(n))

    def choose_action(self, candidates: Sequence[int]) -> int:
        """Uniform draw from a set of action ids (canonical order: sorted)."""
        if len(candidates) == 0:
            raise ValueError("empty action candidate set")
        ordered = sorted(int(a) for a in candidates)
        return ordered[self.integer(len(ordered))]

    def choose_cell(self, candidates: Sequence[Cell], shape: tuple[int, int]) -> Cell:
        """Uniform draw from grid cells (canonical order: row-major)."""
        if len(candidates) == 0:
            raise ValueError("empty cell candidate set")
        ordered = sorted((int(r), int(c)) for r, c in candidates)
        return ordered[self.integer(len(ordered))]

    def sample_weighted_action(self, actions: Sequence[int], weights: Sequence[float]) -> int:
        """Draw an action with probability proportional to its weight."""
        pairs = sorted(zip((int(a) for a in actions), (float(w) for w in weights)))
        total = sum(w for _, w in pairs)
        if total <= 0.0 or any(w < 0.0 for _, w in pairs):
            raise ValueError("weights must be nonnegative with positive sum")
        u = self.uniform() * total
        acc = 0.0
        for a, w in pairs:
            acc += w
            if u < acc:
                return a
        return pairs[-1][0]

    def dirichlet(self, alpha: float, n: int) -> np.ndarray:
        return self._gen.dirichlet(np.full(n, float(alpha)))

    def spawn(self, key: int) -> "RngStream":
        """Independent child stream; deterministic in (parent seed, key)."""
        return RngStream(np.random.SeedSequence(entropy=self._entropy(), spawn_key=(int(key),)))

    def _entropy(self):
        return self._gen.bit_generator.seed_seq.entropy  # type: ignore[union-attr]


class TransportedRng(RngStream):
    """Wraps a base stream; action/cell draws are mapped through a group element.

    A categorical draw over rotated candidates is pulled back through g^-1,
    delegated to the base stream, and the result pushed forward through g.
    Untyped draws pass straight through. Consumption of the underlying
    stream is identical to the base stream's, draw for draw.
    """

    def __init__(self, g: GroupElement, base: RngStream):
        self.g = g
        self._ginv = inverse(g)
        self.base = base

    def uniform(self) -> float:
        return self.base.uniform()

    def integer(self, n: int) -> int:
        return self.base.integer(n)

    def choose_action(self, candidates: Sequence[int]) -> int:
        pulled = [act_on_action(self._ginv, a) for a in candidates]
        return act_on_action(self.g, self.base.choose_action(pulled))

    def choose_cell(self, candidates: Sequence[Cell], shape: tuple[int, int]) -> Cell:
        pulled = []
        base_shape: tuple[int, int] | None = None
        for cell in candidates:
            pcell, pshape = rotate_cell(self._ginv, cell, shape)
            pulled.append(pcell)
            base_shape = pshape
        assert base_shape is not None
        chosen = self.base.choose_cell(pulled, base_shape)
        out, _ = rotate_cell(self.g, chosen, base_shape)
        return out

    def sample_weighted_action(self, actions: Sequence[int], weights: Sequence[float]) -> int:
        pulled = [act_on_action(self._ginv, a) for a in actions]
        return act_on_action(self.g, self.base.sample_weighted_action(pulled, weights))

    def dirichlet(self, alpha: float, n: int) -> np.ndarray:
        return self.base.dirichlet(alpha, n)

    def spawn(self, key: int) -> "TransportedRng":
        return TransportedRng(self.g, self.base.spawn(key))


def rng_transport(g: GroupElement, rng: RngStream) -> RngStream:
    """Wrap a stream so its action/cell draws are relabelled by g."""
    if g.k == 0 and not isinstance(rng, TransportedRng):
        return rng
    if isinstance(rng, TransportedRng):
        # Compose transports rather than nesting wrappers.
        from .groups import compose

        return rng_transport(compose(g, rng.g), rng.base)
    return TransportedRng(g, rng)
