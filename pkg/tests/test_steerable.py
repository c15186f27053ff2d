import numpy as np
import pytest

from geomdp.groups import (
    make_cyclic,
    make_dihedral,
    make_octahedral,
    regular_representation,
    standard_representation,
    trivial_representation,
)
from geomdp.steerable import (
    SO2Blocks,
    SO3Blocks,
    TaggedPoint,
    dimension_report,
    free_parameter_count,
    hat_map,
    intertwiner_basis,
    kernel_constraint_residual,
    orbit_project_so2,
    rotation2,
    so2_basis_constraint_residual,
    so2_kernel_basis_11,
    so3_vector_kernel_basis,
)


class TestSo2KernelBasis:
    def test_values_at_zero(self):
        kb = so2_kernel_basis_11()
        expected = [
            np.eye(2),
            [[0, -1], [1, 0]],
            [[1, 0], [0, -1]],
            [[0, 1], [1, 0]],
        ]
        for elem, want in zip(kb.basis, expected):
            assert np.allclose(elem(0.0), want, atol=1e-15)

    def test_dimension_and_rank(self):
        kb = so2_kernel_basis_11()
        assert kb.dimension == 4
        assert kb.gram_rank(xs=[0.0, 0.9, 2.2]) == 4

    def test_constraint_residual(self):
        assert so2_basis_constraint_residual(samples=200, rng_seed=0) < 1e-9


class TestSo3VectorKernel:
    def test_isotropic_part(self):
        K = so3_vector_kernel_basis(np.array([0.3, -0.2, 0.9]), (1.0, 0.0, 0.0))
        assert np.allclose(K, np.eye(3), atol=1e-14)

    def test_degree_one_is_cross_product_matrix(self):
        x = np.array([1.0, 2.0, -0.5])
        K = so3_vector_kernel_basis(x, (0.0, 1.0, 0.0))
        assert np.allclose(K, hat_map(x / np.linalg.norm(x)), atol=1e-14)
        assert np.allclose(K, -K.T, atol=1e-14)

    def test_rotation_covariance_over_octahedral(self):
        octa = make_octahedral()
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(200):
            x = rng.standard_normal(3)
            rot = octa.matrix(int(rng.integers(octa.order)))
            prof = rng.standard_normal(3)
            lhs = so3_vector_kernel_basis(rot @ x, prof)
            rhs = rot @ so3_vector_kernel_basis(x, prof) @ rot.T
            worst = max(worst, np.max(np.abs(lhs - rhs)))
        assert worst < 1e-8

    def test_zero_direction_rejected(self):
        with pytest.raises(ValueError):
            so3_vector_kernel_basis(np.zeros(3), (1.0, 1.0, 1.0))


GROUPS = {
    "C2": make_cyclic(2),
    "C4": make_cyclic(4),
    "C8": make_cyclic(8),
    "D4": make_dihedral(4),
    "D8": make_dihedral(8),
    "octahedral": make_octahedral(),
}
REP_BUILDERS = {
    "trivial": trivial_representation,
    "standard": standard_representation,
    "regular": regular_representation,
}


class TestIntertwinerBasis:
    def test_trivial_to_trivial(self):
        c4 = make_cyclic(4)
        kb = intertwiner_basis(
            trivial_representation(c4), trivial_representation(c4)
        )
        assert kb.dimension == 1
        assert np.allclose(np.abs(kb.basis[0]), [[1.0]])

    def test_c4_standard_pair(self):
        c4 = make_cyclic(4)
        std = standard_representation(c4)
        kb = intertwiner_basis(std, std)
        assert kb.dimension == 2
        span = np.stack([m.reshape(-1) for m in kb.basis])
        for target in (np.eye(2), np.array([[0.0, -1.0], [1.0, 0.0]])):
            coeffs, res, *_ = np.linalg.lstsq(span.T, target.reshape(-1), rcond=None)
            assert np.allclose(span.T @ coeffs, target.reshape(-1), atol=1e-10)

    def test_c4_regular_pair_dimension(self):
        c4 = make_cyclic(4)
        reg = regular_representation(c4)
        assert intertwiner_basis(reg, reg).dimension == 4

    @pytest.mark.parametrize("gname", sorted(GROUPS), ids=str)
    @pytest.mark.parametrize("in_name", sorted(REP_BUILDERS))
    @pytest.mark.parametrize("out_name", sorted(REP_BUILDERS))
    def test_dimension_matches_projector_oracle(self, gname, in_name, out_name):
        from oracles import (
            character_intertwiner_dimension,
            projector_intertwiner_dimension,
        )

        group = GROUPS[gname]
        rep_in = REP_BUILDERS[in_name](group)
        rep_out = REP_BUILDERS[out_name](group)
        kb = intertwiner_basis(rep_in, rep_out)
        assert kb.dimension == projector_intertwiner_dimension(rep_in, rep_out)
        assert kb.dimension == character_intertwiner_dimension(rep_in, rep_out)
        assert kb.gram_rank() == kb.dimension
        worst = 0.0
        for mat in kb.basis:
            for g in range(group.order):
                worst = max(
                    worst,
                    float(
                        np.max(
                            np.abs(rep_out.matrix(g) @ mat - mat @ rep_in.matrix(g))
                        )
                    ),
                )
        assert worst < 1e-9


class TestKernelConstraintResidual:
    def test_constant_kernel_trivial_reps(self):
        c4 = make_cyclic(4)
        triv = trivial_representation(c4)
        res = kernel_constraint_residual(
            lambda x: np.array([[2.5]]),
            triv,
            triv,
            action=lambda g, x: x,
            samples=20,
            rng_seed=0,
        )
        assert res == 0.0

    def test_detects_broken_kernel(self):
        # perturb one basis element asymmetrically; some sampled rotation sees it
        kb = so2_kernel_basis_11()
        broken = lambda x: kb.basis[2](x) + np.array([[0.1, 0.0], [0.0, 0.0]])
        res = kernel_constraint_residual(
            broken,
            lambda g: rotation2(g),
            lambda g: rotation2(g),
            action=lambda g, x: x + g,
            samples=200,
            rng_seed=1,
            sample_group=lambda r: float(r.uniform(0, 2 * np.pi)),
            sample_point=lambda r: float(r.uniform(0, 2 * np.pi)),
            inverse=lambda g: -g,
        )
        assert res >= 0.05

    def test_requires_positive_samples(self):
        c4 = make_cyclic(4)
        triv = trivial_representation(c4)
        with pytest.raises(ValueError):
            kernel_constraint_residual(
                lambda x: np.eye(1), triv, triv, lambda g, x: x, samples=0
            )


class TestFreeParameterCount:
    def test_unconstrained_is_matrix_size(self):
        c4 = make_cyclic(4)
        std = standard_representation(c4)
        reg = regular_representation(c4)
        assert free_parameter_count(std, reg, equivariant=False) == 8
        assert free_parameter_count(SO2Blocks(2), SO2Blocks(2), False) == 16

    def test_trivial_pair(self):
        c4 = make_cyclic(4)
        triv = trivial_representation(c4)
        assert free_parameter_count(triv, triv, True) == 1
        assert free_parameter_count(triv, triv, False) == 1

    def test_worked_2d_example(self):
        state = SO2Blocks(2)
        act = SO2Blocks(1)
        assert free_parameter_count(state, state, True) == 16
        assert free_parameter_count(act, state, True) == 8
        rep = dimension_report("free2d")
        assert rep["equivariant"]["total"] == "16+8"
        assert rep["equivariant"]["base_domain"] == "R+ x R^4"
        assert rep["non_equivariant"]["domain_dim"] == 6

    def test_worked_3d_example(self):
        rep = dimension_report("free3d")
        assert rep["equivariant"]["total"] == "12+6"
        assert rep["equivariant"]["base_domain"] == "R+ x R^6"
        assert rep["non_equivariant"]["domain_dim"] == 9
        assert free_parameter_count(SO3Blocks(2), SO3Blocks(2), True) == 12
        assert free_parameter_count(SO3Blocks(1), SO3Blocks(2), True) == 6


class TestOrbitProjection:
    def test_pivot_already_canonical(self):
        p = TaggedPoint.of([(3.0, 0.0), (1.0, 2.0)], ["rho1", "rho1"])
        dec = orbit_project_so2(p)
        assert dec.group_coordinate == 0.0
        assert np.allclose(dec.base_point.concat(), p.concat())

    def test_worked_example(self):
        p = TaggedPoint.of([(0, 2), (1, 0), (0, -1)], ["rho1"] * 3)
        dec = orbit_project_so2(p, pivot=0)
        assert np.allclose(dec.base_point.blocks[0], [2, 0], atol=1e-12)
        assert np.allclose(dec.base_point.blocks[1], [0, -1], atol=1e-12)
        assert np.allclose(dec.base_point.blocks[2], [-1, 0], atol=1e-12)
        # stored coordinate maps the representative back onto the input
        assert np.isclose(dec.group_coordinate, np.pi / 2)
        rebuilt = dec.base_point.rotate(dec.group_coordinate)
        assert np.max(np.abs(rebuilt.concat() - p.concat())) < 1e-10

    def test_invariance_across_orbit(self):
        rng = np.random.default_rng(0)
        p = TaggedPoint.of([rng.standard_normal(2) for _ in range(3)], ["rho1"] * 3)
        base0 = orbit_project_so2(p).base_point.concat()
        for _ in range(50):
            theta = rng.uniform(0, 2 * np.pi)
            base = orbit_project_so2(p.rotate(theta)).base_point.concat()
            assert np.max(np.abs(base - base0)) < 1e-9

    def test_idempotent(self):
        p = TaggedPoint.of([(0.3, -1.2), (0.5, 0.1)], ["rho1", "rho1"])
        dec = orbit_project_so2(p)
        again = orbit_project_so2(dec.base_point)
        assert abs(again.group_coordinate) < 1e-12

    def test_degenerate_pivot_falls_back(self):
        p = TaggedPoint.of([(0.0, 0.0), (0.0, 2.0)], ["rho1", "rho1"])
        dec = orbit_project_so2(p, pivot=0)
        assert np.allclose(dec.base_point.blocks[1], [2.0, 0.0], atol=1e-12)

    def test_all_degenerate_identity(self):
        p = TaggedPoint.of([(0.0, 0.0)], ["rho1"])
        assert orbit_project_so2(p).group_coordinate == 0.0

    def test_trivial_blocks_untouched(self):
        p = TaggedPoint.of([(0.0, 1.0), np.array([3.0, 4.0])], ["rho1", "trivial"])
        dec = orbit_project_so2(p)
        assert np.allclose(dec.base_point.blocks[1], [3.0, 4.0])
