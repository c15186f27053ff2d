import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geomdp.groups import (
    GroupError,
    direct_sum,
    identity_group,
    make_cyclic,
    make_dihedral,
    make_group,
    make_icosahedral,
    make_octahedral,
    parse_rep,
    regular_representation,
    rep_apply,
    sign_representation,
    standard_representation,
    trivial_representation,
)

ALL_GROUPS = [
    make_cyclic(1),
    make_cyclic(4),
    make_cyclic(8),
    make_dihedral(2),
    make_dihedral(4),
    make_dihedral(8),
    make_octahedral(),
    make_icosahedral(),
]


@pytest.mark.parametrize("group", ALL_GROUPS, ids=lambda g: g.name)
def test_group_axioms(group):
    assert group.closure_residual() < 1e-10
    assert group.orthogonality_residual() < 1e-10
    assert np.allclose(group.matrix(group.identity_index), np.eye(group.dim))
    for i in range(group.order):
        assert group.mul(i, group.inv(i)) == group.identity_index


def test_cyclic_orders_and_elements():
    assert make_cyclic(1).order == 1
    c4 = make_cyclic(4)
    assert any(
        np.allclose(e, [[0, -1], [1, 0]], atol=1e-12) for e in c4.elements
    )
    assert c4.identity_index == 0  # identity first
    assert make_cyclic(8).order == 8


def test_cyclic_rejects_zero():
    with pytest.raises(GroupError):
        make_cyclic(0)
    with pytest.raises(GroupError):
        make_dihedral(0)


def test_dihedral_orders():
    assert make_dihedral(4).order == 8
    assert make_dihedral(8).order == 16
    d2 = make_dihedral(2)
    for target in (np.diag([-1.0, -1.0]), np.diag([1.0, -1.0])):
        assert any(np.allclose(e, target, atol=1e-12) for e in d2.elements)


def test_octahedral_is_signed_permutations():
    from oracles import signed_permutation_rotations

    octa = make_octahedral()
    assert octa.order == 24
    expected = signed_permutation_rotations()
    for e in expected:
        assert any(np.max(np.abs(e - m)) < 1e-9 for m in octa.elements)


def test_icosahedral_order():
    assert make_icosahedral().order == 60


@pytest.mark.parametrize("group", ALL_GROUPS, ids=lambda g: g.name)
def test_regular_representation_is_permutation_homomorphism(group):
    reg = regular_representation(group)
    assert reg.homomorphism_residual() < 1e-12
    for m in reg.matrices:
        assert set(np.unique(m)) <= {0.0, 1.0}
        assert np.all(m.sum(axis=0) == 1.0)
        assert np.all(m.sum(axis=1) == 1.0)


def test_regular_representation_c1_and_c4():
    assert np.array_equal(regular_representation(make_cyclic(1)).matrices, [[[1.0]]])
    reg = regular_representation(make_cyclic(4))
    shift = reg.matrix(1)
    # left translation by the generator cycles the basis
    assert np.allclose(shift @ np.eye(4)[0], np.eye(4)[1])


def test_direct_sum_dims_and_blocks():
    c4 = make_cyclic(4)
    std = standard_representation(c4)
    triv = trivial_representation(c4)
    summed = direct_sum([std, triv, std])
    assert summed.dim_rep == 5
    assert summed.homomorphism_residual() < 1e-10
    two_std = direct_sum([std, std])
    g = 1
    assert np.allclose(two_std.matrix(g)[:2, :2], c4.matrix(g))
    assert np.allclose(two_std.matrix(g)[2:, 2:], c4.matrix(g))
    assert np.allclose(two_std.matrix(g)[:2, 2:], 0)


def test_direct_sum_of_single_trivial_is_trivial():
    c4 = make_cyclic(4)
    triv = trivial_representation(c4)
    assert np.array_equal(direct_sum([triv]).matrices, triv.matrices)


def test_direct_sum_group_mismatch():
    with pytest.raises(GroupError):
        direct_sum(
            [
                trivial_representation(make_cyclic(4)),
                trivial_representation(make_cyclic(3)),
            ]
        )


def test_rep_apply_identity_and_rotation():
    c4 = make_cyclic(4)
    std = standard_representation(c4)
    v = np.array([1.0, 0.0])
    assert np.allclose(rep_apply(std, c4.identity_index, v), v)
    assert np.allclose(rep_apply(std, 1, v), [0.0, 1.0], atol=1e-12)


def test_rep_apply_shape_error():
    std = standard_representation(make_cyclic(4))
    with pytest.raises(ValueError):
        rep_apply(std, 0, np.zeros(3))


@settings(max_examples=25, deadline=None)
@given(
    data=st.data(),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_rep_apply_composition(data, seed):
    group = data.draw(st.sampled_from(ALL_GROUPS[:6]))
    rep = regular_representation(group)
    g = data.draw(st.integers(min_value=0, max_value=group.order - 1))
    h = data.draw(st.integers(min_value=0, max_value=group.order - 1))
    v = np.random.default_rng(seed).standard_normal(rep.dim_rep)
    composed = rep_apply(rep, g, rep_apply(rep, h, v))
    direct = rep_apply(rep, group.mul(g, h), v)
    assert np.max(np.abs(composed - direct)) < 1e-10


def test_sign_representation():
    d4 = make_dihedral(4)
    sgn = sign_representation(d4)
    assert sgn.homomorphism_residual() < 1e-12
    dets = sorted(np.unique(sgn.matrices))
    assert dets == [-1.0, 1.0]
    c4 = make_cyclic(4)
    assert np.all(sign_representation(c4).matrices == 1.0)


def test_make_group_names():
    assert make_group("C8").order == 8
    assert make_group("d16").order == 32
    assert make_group("octa").order == 24
    assert make_group("icosa").order == 60
    assert make_group("none").order == 1
    assert identity_group(3).dim == 3
    with pytest.raises(GroupError):
        make_group("E8")


def test_parse_rep_sums():
    d8 = make_dihedral(8)
    rep = parse_rep(d8, "standard+trivial+sign")
    assert rep.dim_rep == 4
    assert rep.homomorphism_residual() < 1e-10
