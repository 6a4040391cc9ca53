"""Independent straight-line tree search used as an oracle in tests.

Deliberately structured nothing like the production search: the tree is a
flat dict keyed by action paths, scores are computed with scalar math, and
the backup walks the path edges explicitly. The selection and backup
formulas are transcribed directly:

    score(a) = Q(s,a) + P(s,a) * sqrt(sum_b N(s,b)) / (1 + N(s,a))
                        * (c1 + log((sum_b N(s,b) + c2 + 1) / c2))
    Q <- (N * Q + G) / (N + 1),  N <- N + 1

with G accumulated leaf-to-root as G <- r + discount * G starting from the
leaf value. Ties draw uniformly from the same RngStream contract the real
search uses, so paired runs consume identical entropy.
"""

import math

from eqzero.rngs import RngStream


class StubModel:
    """Deterministic fake world model keyed purely by the action path.

    Latents are the action paths themselves; rewards, values and priors are
    drawn from a generator seeded by (seed, path), so outputs are identical
    no matter which search asks, in which order.
    """

    def __init__(self, seed: int, n_actions: int = 4, spread: float = 1.0):
        self.seed = int(seed)
        self.n_actions = n_actions
        self.spread = spread

    def _draw(self, path):
        import numpy as np

        gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, len(path), *path]))
        )
        prior = gen.dirichlet(np.ones(self.n_actions))
        reward = float(gen.normal()) * self.spread
        value = float(gen.normal()) * self.spread
        return prior, reward, value

    def root(self, obs):
        prior, _, value = self._draw(())
        return (), prior, value

    def step(self, latent, action):
        path = tuple(latent) + (int(action),)
        prior, reward, value = self._draw(path)
        return path, reward, prior, value


def reference_search(model, budget: int, c1: float, c2: float, discount: float,
                     rng: RngStream):
    """Returns the flat tree {path: node-dict} after `budget` simulations."""
    n_actions = model.n_actions
    _, prior0, value0 = model.root(None)

    def fresh(latent, prior, value):
        return {
            "latent": latent,
            "prior": [float(p) for p in prior],
            "value": float(value),
            "n": [0] * n_actions,
            "q": [0.0] * n_actions,
            "r": [0.0] * n_actions,
        }

    tree = {(): fresh((), prior0, value0)}
    for _ in range(budget):
        path = ()
        while True:
            node = tree[path]
            total = sum(node["n"])
            scores = []
            for a in range(n_actions):
                bonus = (
                    node["prior"][a]
                    * math.sqrt(total)
                    / (1 + node["n"][a])
                    * (c1 + math.log((total + c2 + 1) / c2))
                )
                scores.append(node["q"][a] + bonus)
            best = max(scores)
            action = rng.choose_action([a for a in range(n_actions) if scores[a] == best])
            if path + (action,) in tree:
                path = path + (action,)
                continue
            break
        latent, reward, prior, value = model.step(tree[path]["latent"], action)
        tree[path]["r"][action] = float(reward)
        tree[path + (action,)] = fresh(latent, prior, value)
        edges = [(path[:d], path[d]) for d in range(len(path))] + [(path, action)]
        g = float(value)
        for parent, act in reversed(edges):
            node = tree[parent]
            g = node["r"][act] + discount * g
            node["q"][act] = (node["n"][act] * node["q"][act] + g) / (node["n"][act] + 1)
            node["n"][act] += 1
    return tree
