"""Group algebra and representation properties of the C4 module."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqzero.groups import (
    C4,
    DIR_VECTORS,
    GroupElement,
    IDENTITY,
    R90,
    R180,
    R270,
    act_on_action,
    act_on_latent,
    act_on_observation,
    action_permutation,
    compose,
    inverse,
    rotate_cell,
)


def test_elements_reduce_mod_four():
    assert GroupElement(5) == R90
    assert GroupElement(-1) == R270
    assert GroupElement(4) == IDENTITY


def test_composition_table():
    assert compose(R90, R90) == R180
    assert compose(IDENTITY, R270) == R270
    assert compose(R270, R90) == IDENTITY


def test_group_axioms_exhaustive():
    for g, h, l in itertools.product(C4, repeat=3):
        assert compose(compose(g, h), l) == compose(g, compose(h, l))
    for g in C4:
        assert compose(IDENTITY, g) == g == compose(g, IDENTITY)
        assert compose(g, inverse(g)) == IDENTITY == compose(inverse(g), g)
    # inverses are unique: the composition table has one identity per row
    for g in C4:
        assert sum(compose(g, h) == IDENTITY for h in C4) == 1


def test_inverse_examples():
    assert inverse(R90) == R270
    assert inverse(IDENTITY) == IDENTITY
    assert inverse(R180) == R180


def test_observation_rotation_two_by_two():
    grid = np.array([["a", "b"], ["c", "d"]], dtype=object)
    out = act_on_observation(R90, grid)
    assert out.tolist() == [["c", "a"], ["d", "b"]]


def test_observation_rotation_rectangular_shape():
    grid = np.arange(12).reshape(3, 4)
    out = act_on_observation(R90, grid)
    assert out.shape == (4, 3)
    # four applications compose to the identity, bit exact
    again = grid
    for _ in range(4):
        again = act_on_observation(R90, again)
    assert np.array_equal(again, grid)


def test_observation_identity_returns_equal_fresh_array():
    grid = np.ones((3, 3))
    out = act_on_observation(IDENTITY, grid)
    assert np.array_equal(out, grid)
    out[0, 0] = 5.0
    assert grid[0, 0] == 1.0  # never a view


def test_action_convention_down_becomes_left():
    down, left = 1, 2
    assert act_on_action(R90, down) == left


def test_action_examples():
    assert act_on_action(IDENTITY, 3) == 3
    assert act_on_action(R180, 0) == 2  # right -> left
    assert act_on_action(R90, 7) == 7  # non-movement ids are fixed points


def test_action_restriction_properties():
    for g in C4:
        imgs = [act_on_action(g, a) for a in range(4)]
        assert sorted(imgs) == [0, 1, 2, 3]  # bijection on the directional orbit
        for a in range(4, 9):
            assert act_on_action(g, a) == a


def test_latent_rotation():
    z = ("z1", "z2", "z3", "z4")
    assert act_on_latent(R90, z) == ("z2", "z3", "z4", "z1")
    assert act_on_latent(IDENTITY, z) == z
    assert act_on_latent(R180, z) == ("z3", "z4", "z1", "z2")


def test_latent_requires_four_components():
    with pytest.raises(ValueError):
        act_on_latent(R90, ("a", "b", "c"))


@settings(max_examples=60)
@given(
    gk=st.integers(0, 3),
    hk=st.integers(0, 3),
    h=st.integers(2, 6),
    w=st.integers(2, 6),
    seed=st.integers(0, 2**20),
)
def test_representation_homomorphisms(gk, hk, h, w, seed):
    g, hh = GroupElement(gk), GroupElement(hk)
    grid = np.random.default_rng(seed).standard_normal((h, w))
    assert np.array_equal(
        act_on_observation(g, act_on_observation(hh, grid)),
        act_on_observation(compose(g, hh), grid),
    )
    for a in range(6):
        assert act_on_action(g, act_on_action(hh, a)) == act_on_action(compose(g, hh), a)
    z = tuple(np.random.default_rng(seed + i).standard_normal(3) for i in range(4))
    lhs = act_on_latent(g, act_on_latent(hh, z))
    rhs = act_on_latent(compose(g, hh), z)
    for a_c, b_c in zip(lhs, rhs):
        assert a_c is b_c


def test_rotate_cell_matches_observation_action():
    rng = np.random.default_rng(0)
    for _ in range(200):
        h, w = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        r, c = int(rng.integers(h)), int(rng.integers(w))
        g = C4[int(rng.integers(4))]
        grid = np.zeros((h, w))
        grid[r, c] = 1.0
        rotated = act_on_observation(g, grid)
        (rr, rc), shape = rotate_cell(g, (r, c), (h, w))
        assert shape == rotated.shape
        assert rotated[rr, rc] == 1.0


def test_rotate_cell_consistent_with_direction_vectors():
    # moving by direction a from cell p, then rotating, equals rotating then
    # moving by the rotated direction
    for g in C4:
        for a in range(4):
            p = (2, 3)
            dr, dc = DIR_VECTORS[a]
            q = (p[0] + dr, p[1] + dc)
            p_rot, shape = rotate_cell(g, p, (7, 7))
            q_rot, _ = rotate_cell(g, q, (7, 7))
            dr2, dc2 = DIR_VECTORS[act_on_action(g, a)]
            assert (p_rot[0] + dr2, p_rot[1] + dc2) == q_rot


def test_action_permutation_array():
    perm = action_permutation(R90, 6)
    assert perm.tolist() == [1, 2, 3, 0, 4, 5]
