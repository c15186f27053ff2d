"""Steerable kernel bases, intertwiner spaces, and orbit canonicalization.

A kernel K is steerable for input/output representations (rho_in, rho_out)
when K(g . x) = rho_out(g) K(x) rho_in(g)^-1 for all g.  Constant kernels are
intertwiners; for planar rotations and 3D rotations acting on their standard
vector types the bases are known in closed form, while finite-group bases are
computed as nullspaces of the stacked constraint system.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .groups import FiniteGroup, Representation

NULLSPACE_RTOL = 1e-9


@dataclass(frozen=True)
class SO2Blocks:
    """m copies of the 2-dim standard type of planar rotations."""

    blocks: int

    dim_rep = property(lambda self: 2 * self.blocks)
    coeffs_per_pair = 4


@dataclass(frozen=True)
class SO3Blocks:
    """m copies of the 3-dim vector type of spatial rotations."""

    blocks: int

    dim_rep = property(lambda self: 3 * self.blocks)
    coeffs_per_pair = 3


@dataclass(frozen=True)
class KernelBasis:
    """Basis of a space of steerable kernels.

    Elements are either constant matrices (intertwiner case) or callables
    mapping the orbit coordinate to a matrix (analytic rotation cases).
    """

    rep_in: object
    rep_out: object
    basis: tuple
    dimension: int

    def at(self, x=None) -> np.ndarray:
        """Stack of basis matrices evaluated at orbit coordinate x."""
        mats = [b(x) if callable(b) else b for b in self.basis]
        return np.stack(mats) if mats else np.zeros((0, 0, 0))

    def gram_rank(self, xs: Sequence | None = None) -> int:
        """Rank of the Gram matrix of basis elements (sampled if analytic)."""
        if self.dimension == 0:
            return 0
        if xs is None:
            xs = [None]
        vecs = np.concatenate(
            [self.at(x).reshape(self.dimension, -1) for x in xs], axis=1
        )
        gram = vecs @ vecs.T
        return int(np.linalg.matrix_rank(gram, tol=1e-9 * max(1.0, gram.max())))


def rotation2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def so2_kernel_basis_11() -> KernelBasis:
    """The 4-dim basis of 2x2 planar-rotation-steerable kernels on the circle.

    The commuting pair {I, J} is angle-independent; the remaining two elements
    rotate at double frequency: R(t) F R(-t) traces the (cos 2x, sin 2x) orbit
    of the reflection-type matrices.
    """
    eye = np.eye(2)
    jmat = np.array([[0.0, -1.0], [1.0, 0.0]])

    def k3(x: float) -> np.ndarray:
        c, s = np.cos(2 * x), np.sin(2 * x)
        return np.array([[c, s], [s, -c]])

    def k4(x: float) -> np.ndarray:
        c, s = np.cos(2 * x), np.sin(2 * x)
        return np.array([[-s, c], [c, s]])

    basis = (lambda x: eye, lambda x: jmat, k3, k4)
    return KernelBasis(rep_in=SO2Blocks(1), rep_out=SO2Blocks(1), basis=basis, dimension=4)


def hat_map(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix of a 3-vector."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_vector_kernel_basis(x: np.ndarray, radial_profiles: Sequence[float]) -> np.ndarray:
    """Assemble the degree-0/1/2 harmonic kernel for 3D vector in/out types.

    The three angular parts of a vector-to-vector kernel at direction
    n = x/|x| are the isotropic identity, the antisymmetric cross-product
    matrix of n, and the traceless symmetric n n^T - I/3; one radial profile
    weights each.  Real harmonics, no Condon-Shortley phase.
    """
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    if r == 0.0:
        raise ValueError("kernel direction undefined at x = 0")
    n = x / r
    p0, p1, p2 = radial_profiles
    return (
        p0 * np.eye(3)
        + p1 * hat_map(n)
        + p2 * (np.outer(n, n) - np.eye(3) / 3.0)
    )


def _nullspace(mat: np.ndarray) -> np.ndarray:
    """Orthonormal rows spanning the nullspace of mat (rank-revealing SVD).

    The cutoff has an absolute floor: when every constraint row is numerical
    dust (e.g. sin(pi) entries of order 1e-16), the whole matrix is zero and
    a purely relative threshold would mistake noise for rank.
    """
    _, svals, vt = np.linalg.svd(mat, full_matrices=True)
    if svals.size == 0:
        return vt
    cutoff = max(NULLSPACE_RTOL * svals[0], 1e-12)
    rank = int(np.sum(svals > cutoff))
    return vt[rank:]


def _regular_multiplicity(rep: Representation) -> int | None:
    """Multiplicity m if rep is m copies of the regular representation."""
    parts = [p for p in rep.name.split("+") if p]
    if parts and all(p == "regular" for p in parts):
        if rep.dim_rep == len(parts) * rep.group.order:
            return len(parts)
    return None


def _stacked_constraint_nullspace(rep_in: Representation, rep_out: Representation) -> np.ndarray:
    """Solve rho_out(g) M = M rho_in(g) for all g by stacking constraints."""
    d_in, d_out = rep_in.dim_rep, rep_out.dim_rep
    eye_in, eye_out = np.eye(d_in), np.eye(d_out)
    rows = []
    for g in range(rep_in.group.order):
        rows.append(
            np.kron(rep_out.matrix(g), eye_in) - np.kron(eye_out, rep_in.matrix(g).T)
        )
    null = _nullspace(np.concatenate(rows, axis=0))
    return null.reshape(-1, d_out, d_in)


def _basis_into_regular(rep_in: Representation, mult: int) -> np.ndarray:
    """Closed-form basis of maps from rep_in into mult copies of the regular rep.

    Row g of each element is a matrix entry of rho_in at g^-1, one basis map
    per input coordinate and output copy.
    """
    group = rep_in.group
    n, d = group.order, rep_in.dim_rep
    inv = rep_in.matrices[group.inverse_table]          # (n, d, d)
    mats = []
    for k in range(mult):
        for i in range(d):
            block = inv[:, i, :]                         # (n, d)
            full = np.zeros((mult * n, d))
            full[k * n : (k + 1) * n] = block
            mats.append(full / np.sqrt(n))
    return np.stack(mats)


def _basis_from_regular(mult: int, rep_out: Representation) -> np.ndarray:
    """Closed-form basis of maps from mult copies of the regular rep to rep_out."""
    group = rep_out.group
    n, d = group.order, rep_out.dim_rep
    cols = rep_out.matrices.transpose(1, 0, 2)           # (d, n, d): [:, g, i] = rho(g)e_i
    mats = []
    for k in range(mult):
        for i in range(d):
            block = cols[:, :, i]                        # (d, n)
            full = np.zeros((d, mult * n))
            full[:, k * n : (k + 1) * n] = block
            mats.append(full / np.sqrt(n))
    return np.stack(mats)


def _basis_regular_to_regular(m_in: int, m_out: int, group: FiniteGroup) -> np.ndarray:
    """Right translations commute with left translations; kron in the copies."""
    n = group.order
    rights = np.zeros((n, n, n))
    for h in range(n):
        rights[h, group.product_table[:, h], np.arange(n)] = 1.0
    mats = []
    for ko in range(m_out):
        for ki in range(m_in):
            for h in range(n):
                full = np.zeros((m_out * n, m_in * n))
                full[ko * n : (ko + 1) * n, ki * n : (ki + 1) * n] = rights[h]
                mats.append(full / np.sqrt(n))
    return np.stack(mats)


def intertwiner_basis(rep_in: Representation, rep_out: Representation) -> KernelBasis:
    """Orthonormal basis of linear maps commuting with the two representations.

    Regular-representation factors admit closed-form bases (used for network
    layers, where the stacked solve would be prohibitively large); everything
    else goes through the stacked-constraint nullspace.
    """
    if rep_in.group.order != rep_out.group.order or not np.array_equal(
        rep_in.group.elements, rep_out.group.elements
    ):
        raise ValueError("intertwiner_basis: representations of different groups")
    m_in = _regular_multiplicity(rep_in)
    m_out = _regular_multiplicity(rep_out)
    if m_in is not None and m_out is not None:
        mats = _basis_regular_to_regular(m_in, m_out, rep_in.group)
    elif m_out is not None:
        mats = _basis_into_regular(rep_in, m_out)
    elif m_in is not None:
        mats = _basis_from_regular(m_in, rep_out)
    else:
        mats = _stacked_constraint_nullspace(rep_in, rep_out)
    return KernelBasis(
        rep_in=rep_in, rep_out=rep_out, basis=tuple(mats), dimension=len(mats)
    )


def _rep_as_fn(rep) -> Callable:
    if isinstance(rep, Representation):
        return rep.matrix
    return rep


def kernel_constraint_residual(
    kernel: Callable,
    rep_in,
    rep_out,
    action: Callable,
    samples: int = 200,
    rng_seed: int = 0,
    *,
    sample_group: Callable | None = None,
    sample_point: Callable | None = None,
    inverse: Callable | None = None,
) -> float:
    """Max sampled violation of K(g . x) = rho_out(g) K(x) rho_in(g)^-1.

    rep_in / rep_out may be Representation objects (group elements are then
    sampled as indices and inverted through the group table) or callables
    g -> matrix, in which case sample_group and inverse must be supplied.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    if sample_group is None:
        if not isinstance(rep_in, Representation):
            raise ValueError("sample_group is required for non-finite representations")
        group = rep_in.group
        sample_group = lambda r: int(r.integers(group.order))
        inverse = group.inv
    if inverse is None:
        raise ValueError("inverse is required alongside sample_group")
    if sample_point is None:
        if not isinstance(rep_in, Representation):
            raise ValueError("sample_point is required for analytic kernels")
        dim = rep_in.dim_rep
        sample_point = lambda r: r.standard_normal(dim)
    fn_in, fn_out = _rep_as_fn(rep_in), _rep_as_fn(rep_out)
    worst = 0.0
    for _ in range(samples):
        g = sample_group(rng)
        x = sample_point(rng)
        lhs = kernel(action(g, x))
        rhs = fn_out(g) @ kernel(x) @ fn_in(inverse(g))
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def so2_basis_constraint_residual(samples: int = 200, rng_seed: int = 0) -> float:
    """Worst steerability violation over the planar kernel basis elements."""
    kb = so2_kernel_basis_11()
    rng_angles = lambda r: float(r.uniform(0.0, 2.0 * np.pi))
    worst = 0.0
    for elem in kb.basis:
        res = kernel_constraint_residual(
            elem,
            lambda g: rotation2(g),
            lambda g: rotation2(g),
            action=lambda g, x: x + g,
            samples=samples,
            rng_seed=rng_seed,
            sample_group=rng_angles,
            sample_point=rng_angles,
            inverse=lambda g: -g,
        )
        worst = max(worst, res)
    return worst


def free_parameter_count(rep_in, rep_out, equivariant: bool) -> int:
    """Free entries of a kernel at one base point, with or without symmetry.

    Unconstrained kernels have one parameter per matrix entry; constrained
    ones have one coefficient per (irrep-block pair, basis element).
    """
    if not equivariant:
        return rep_out.dim_rep * rep_in.dim_rep
    if isinstance(rep_in, (SO2Blocks, SO3Blocks)) and type(rep_in) is type(rep_out):
        return rep_in.blocks * rep_out.blocks * rep_in.coeffs_per_pair
    if isinstance(rep_in, Representation) and isinstance(rep_out, Representation):
        return intertwiner_basis(rep_in, rep_out).dimension
    raise TypeError("representations must both be finite or both continuous blocks")


def dimension_report(task: str) -> dict:
    """Coefficient and domain counts for the worked free-particle tasks."""
    if task == "free2d":
        state, act = SO2Blocks(2), SO2Blocks(1)
        base_desc = "R+ x R^4"
        base_dims = (1, 4)
    elif task == "free3d":
        state, act = SO3Blocks(2), SO3Blocks(1)
        base_desc = "R+ x R^6"
        base_dims = (1, 6)
    else:
        raise ValueError(f"unknown task {task!r} (expected free2d or free3d)")
    a_eq = free_parameter_count(state, state, equivariant=True)
    b_eq = free_parameter_count(act, state, equivariant=True)
    a_raw = free_parameter_count(state, state, equivariant=False)
    b_raw = free_parameter_count(act, state, equivariant=False)
    raw_dim = state.dim_rep + act.dim_rep
    return {
        "task": task,
        "equivariant": {
            "dynamics_coeffs": a_eq,
            "control_coeffs": b_eq,
            "total": f"{a_eq}+{b_eq}",
            "base_domain": base_desc,
            "base_domain_dim": sum(base_dims),
        },
        "non_equivariant": {
            "dynamics_entries": a_raw,
            "control_entries": b_raw,
            "domain_dim": raw_dim,
        },
    }


@dataclass(frozen=True)
class TaggedPoint:
    """Vector split into blocks tagged by how planar rotations act on them.

    Tags: "rho1" for 2-vectors rotated by R(theta), "trivial" for untouched
    scalars/blocks.
    """

    blocks: tuple
    tags: tuple

    def __post_init__(self):
        if len(self.blocks) != len(self.tags):
            raise ValueError("blocks and tags must align")
        for b, t in zip(self.blocks, self.tags):
            if t == "rho1" and len(b) != 2:
                raise ValueError("rho1 blocks must be 2-vectors")

    @classmethod
    def of(cls, blocks, tags) -> "TaggedPoint":
        return cls(
            tuple(np.asarray(b, dtype=float) for b in blocks), tuple(tags)
        )

    def rotate(self, theta: float) -> "TaggedPoint":
        rot = rotation2(theta)
        new = tuple(
            rot @ b if t == "rho1" else b for b, t in zip(self.blocks, self.tags)
        )
        return TaggedPoint(new, self.tags)

    def concat(self) -> np.ndarray:
        return np.concatenate([np.atleast_1d(b) for b in self.blocks])

    def rho1_indices(self) -> list[int]:
        return [i for i, t in enumerate(self.tags) if t == "rho1"]


@dataclass(frozen=True)
class OrbitDecomposition:
    """Canonical split p = (group coordinate) . (orbit representative)."""

    base_point: TaggedPoint
    group_coordinate: float
    residual: float


def orbit_project_so2(
    p: TaggedPoint, pivot: int | None = None, degenerate_tol: float = 1e-12
) -> OrbitDecomposition:
    """Rotate a tagged point so its pivot block lies on the positive first axis.

    The stored angle maps the representative back onto the input, so
    base.rotate(group_coordinate) reconstructs p.  A near-zero pivot falls
    back to the largest-norm rho1 block; if every rho1 block is degenerate
    the point is its own representative.
    """
    rho1 = p.rho1_indices()
    if not rho1:
        return OrbitDecomposition(p, 0.0, 0.0)
    order = [pivot] if pivot is not None else []
    order += sorted(
        (i for i in rho1 if i not in order),
        key=lambda i: -float(np.linalg.norm(p.blocks[i])),
    )
    theta = 0.0
    for i in order:
        b = p.blocks[i]
        if np.linalg.norm(b) >= degenerate_tol:
            theta = float(np.arctan2(b[1], b[0]))
            break
    base = p.rotate(-theta)
    residual = float(
        np.max(np.abs(base.rotate(theta).concat() - p.concat()))
    )
    return OrbitDecomposition(base, theta, residual)
