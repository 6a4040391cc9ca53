"""The cyclic rotation group C4 and its actions on grids, moves, and latents.

Everything here is exact: grid rotation is a pure index permutation, move
rotation is modular arithmetic, and latent rotation is a cyclic shift of a
4-tuple. No floating-point arithmetic is performed, so every action commutes
bit-exactly with any deterministic function applied before or after it.

Convention (fixed once, everywhere): rotations are *clockwise*. Under one
90-degree clockwise step, moving down becomes moving left, and cell (r, c)
of an HxW grid lands at (c, H-1-r) of the WxH result.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, TypeVar

import numpy as np

# Directional move ids form one C4 orbit; ids >= 4 never move and are group
# fixed points.
RIGHT, DOWN, LEFT, UP = 0, 1, 2, 3
N_DIRECTIONS = 4

# (row delta, col delta) for each directional move id.
DIR_VECTORS = ((0, 1), (1, 0), (0, -1), (-1, 0))


@dataclass(frozen=True, order=True)
class GroupElement:
    """Clockwise rotation by 90*k degrees; k is kept reduced mod 4."""

    k: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "k", self.k % 4)


IDENTITY = GroupElement(0)
R90 = GroupElement(1)
R180 = GroupElement(2)
R270 = GroupElement(3)
C4 = (IDENTITY, R90, R180, R270)


def compose(g: GroupElement, h: GroupElement) -> GroupElement:
    """g after h (order is irrelevant: C4 is abelian)."""
    return GroupElement(g.k + h.k)


def inverse(g: GroupElement) -> GroupElement:
    return GroupElement(-g.k)


def act_on_observation(g: GroupElement, x: np.ndarray) -> np.ndarray:
    """Rotate the trailing two axes clockwise by 90*g.k degrees.

    Accepts any array shaped (..., H, W); an HxW grid becomes WxH. Always
    returns a fresh contiguous array, never a view of the input.
    """
    x = np.asarray(x)
    if x.ndim < 2:
        raise ValueError(f"observation needs at least 2 axes, got shape {x.shape}")
    return np.rot90(x, k=-g.k, axes=(-2, -1)).copy()


def act_on_action(g: GroupElement, a: int) -> int:
    """Permute a directional move by the cycle right->down->left->up; fix the rest."""
    a = int(a)
    if a < 0:
        raise ValueError(f"action id must be nonnegative, got {a}")
    if a < N_DIRECTIONS:
        return (a + g.k) % N_DIRECTIONS
    return a


def action_permutation(g: GroupElement, n_actions: int) -> np.ndarray:
    """Array p with p[a] = act_on_action(g, a), for vectorised relabelling."""
    return np.array([act_on_action(g, a) for a in range(n_actions)], dtype=np.int64)


T = TypeVar("T")


def act_on_latent(g: GroupElement, z: Sequence[T]) -> tuple[T, T, T, T]:
    """Cyclically shift the 4 latent components: one step maps (z1,z2,z3,z4) to (z2,z3,z4,z1)."""
    if len(z) != 4:
        raise ValueError(f"latent state must have exactly 4 components, got {len(z)}")
    return tuple(z[(i + g.k) % 4] for i in range(4))  # type: ignore[return-value]


def rotate_cell(
    g: GroupElement, cell: tuple[int, int], shape: tuple[int, int]
) -> tuple[tuple[int, int], tuple[int, int]]:
    """Map a (row, col) index through the same permutation act_on_observation uses.

    Returns the image cell together with the rotated grid shape.
    """
    r, c = cell
    h, w = shape
    if not (0 <= r < h and 0 <= c < w):
        raise ValueError(f"cell {cell} outside grid of shape {shape}")
    for _ in range(g.k):
        r, c = c, h - 1 - r
        h, w = w, h
    return (r, c), (h, w)
