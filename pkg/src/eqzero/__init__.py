"""eqzero: C4-equivariant world models, pUCT tree search whose action
selection is exactly rotation-equivariant, a rotation-symmetric grid-world,
and the experiment harness exercising the same/rotated/different protocol.
"""

from . import checkpoint, env, groups, harness, mcts, nd, plotting, rngs, training, worldmodel
from .worldmodel import VARIANTS, ModelConfig, WorldModel

__all__ = [
    "checkpoint",
    "env",
    "groups",
    "harness",
    "mcts",
    "nd",
    "plotting",
    "rngs",
    "training",
    "worldmodel",
    "VARIANTS",
    "ModelConfig",
    "WorldModel",
]
