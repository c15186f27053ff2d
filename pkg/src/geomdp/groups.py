"""Finite symmetry groups as explicit orthogonal-matrix sets.

Groups are stored as ordered lists of d x d orthogonal matrices together with
a product lookup table built at construction, so composition and inversion are
exact integer-index operations.  Representations (trivial, sign, standard,
regular, direct sums) are stored as per-element matrix stacks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MATCH_TOL = 1e-8


class GroupError(ValueError):
    """Raised for invalid group constructions or mismatched groups."""


@dataclass(frozen=True)
class FiniteGroup:
    """Finite subgroup of O(d) given by its element matrices.

    Immutable after construction; safe to share across threads.
    """

    name: str
    dim: int
    elements: np.ndarray          # (n, dim, dim)
    identity_index: int
    product_table: np.ndarray = field(repr=False)   # (n, n) ints
    inverse_table: np.ndarray = field(repr=False)   # (n,) ints

    @property
    def order(self) -> int:
        return len(self.elements)

    def mul(self, i: int, j: int) -> int:
        return int(self.product_table[i, j])

    def inv(self, i: int) -> int:
        return int(self.inverse_table[i])

    def matrix(self, i: int) -> np.ndarray:
        return self.elements[i]

    def closure_residual(self) -> float:
        """Max over pairs of the distance from E_i E_j to its table entry."""
        prods = np.einsum("iab,jbc->ijac", self.elements, self.elements)
        matched = self.elements[self.product_table]
        return float(np.max(np.abs(prods - matched)))

    def orthogonality_residual(self) -> float:
        eye = np.eye(self.dim)
        return float(
            max(np.max(np.abs(e.T @ e - eye)) for e in self.elements)
        )


def _build_tables(elements: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray, int]:
    """Match every pairwise product back to an element index.

    Products are matched by nearest element in max-abs distance; a miss above
    MATCH_TOL means the set is not closed.
    """
    n = len(elements)
    flat = elements.reshape(n, -1)
    table = np.empty((n, n), dtype=np.int64)
    for i in range(n):
        prods = (elements[i] @ elements).reshape(n, -1)
        dists = np.max(np.abs(prods[:, None, :] - flat[None, :, :]), axis=2)
        idx = np.argmin(dists, axis=1)
        best = dists[np.arange(n), idx]
        if np.max(best) > MATCH_TOL:
            raise GroupError(
                f"{name}: element set is not closed under product "
                f"(worst residual {np.max(best):.3e})"
            )
        table[i, :] = idx
    eye = np.eye(elements.shape[1])
    id_dists = np.max(np.abs(elements - eye), axis=(1, 2))
    identity_index = int(np.argmin(id_dists))
    if id_dists[identity_index] > MATCH_TOL:
        raise GroupError(f"{name}: identity matrix missing from element set")
    inverse = np.empty(n, dtype=np.int64)
    for i in range(n):
        js = np.where(table[i] == identity_index)[0]
        if len(js) == 0:
            raise GroupError(f"{name}: element {i} has no inverse in the set")
        inverse[i] = js[0]
    return table, inverse, identity_index


def _group_from_elements(name: str, elements: np.ndarray) -> FiniteGroup:
    elements = np.asarray(elements, dtype=float)
    table, inverse, identity_index = _build_tables(elements, name)
    return FiniteGroup(
        name=name,
        dim=elements.shape[1],
        elements=elements,
        identity_index=identity_index,
        product_table=table,
        inverse_table=inverse,
    )


def _rotation2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def make_cyclic(n: int) -> FiniteGroup:
    """Rotations by 2*pi*k/n, k = 0..n-1, identity first."""
    if n < 1:
        raise GroupError(f"cyclic group order must be >= 1, got {n}")
    elements = np.stack([_rotation2(2.0 * np.pi * k / n) for k in range(n)])
    return _group_from_elements(f"C{n}", elements)


def make_dihedral(n: int) -> FiniteGroup:
    """n rotations plus n reflections (rotation composed with diag(1, -1))."""
    if n < 1:
        raise GroupError(f"dihedral group order must be >= 1, got {n}")
    flip = np.diag([1.0, -1.0])
    rots = [_rotation2(2.0 * np.pi * k / n) for k in range(n)]
    elements = np.stack(rots + [r @ flip for r in rots])
    return _group_from_elements(f"D{n}", elements)


def _axis_rotation(axis: np.ndarray, theta: float) -> np.ndarray:
    """Rodrigues rotation about a (non-zero) 3-vector axis."""
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    k = np.array([[0, -u[2], u[1]], [u[2], 0, -u[0]], [-u[1], u[0], 0]])
    return np.eye(3) + np.sin(theta) * k + (1 - np.cos(theta)) * (k @ k)


def _close_under_product(generators: list[np.ndarray], max_order: int) -> np.ndarray:
    """Generate the group by repeated products, deduplicating numerically."""
    elements: list[np.ndarray] = [np.eye(len(generators[0]))]

    def find(m: np.ndarray) -> int | None:
        for i, e in enumerate(elements):
            if np.max(np.abs(e - m)) < MATCH_TOL:
                return i
        return None

    frontier = list(generators)
    while frontier:
        nxt: list[np.ndarray] = []
        for g in frontier:
            if find(g) is not None:
                continue
            elements.append(g)
            if len(elements) > max_order:
                raise GroupError("generated group exceeds expected order")
            for e in list(elements):
                nxt.append(g @ e)
                nxt.append(e @ g)
        frontier = nxt
    return np.stack(elements)


def _lex_sorted(elements: np.ndarray) -> np.ndarray:
    """Deterministic element order: lexicographic on rounded entries."""
    keys = np.round(elements.reshape(len(elements), -1), 8)
    order = np.lexsort(keys.T[::-1])
    return elements[order]


def make_octahedral() -> FiniteGroup:
    """Rotation group of the octahedron/cube, order 24.

    Generated from a 4-fold rotation about the z axis and a 3-fold rotation
    about the cube diagonal (1, 1, 1), then closed under product.
    """
    gens = [
        _axis_rotation(np.array([0.0, 0.0, 1.0]), np.pi / 2),
        _axis_rotation(np.array([1.0, 1.0, 1.0]), 2 * np.pi / 3),
    ]
    elements = _lex_sorted(np.round(_close_under_product(gens, 24), 15))
    return _group_from_elements("octahedral", elements)


def make_icosahedral() -> FiniteGroup:
    """Rotation group of the icosahedron, order 60.

    With vertices at cyclic permutations of (0, +-1, +-phi), the vertex
    (0, 1, phi) carries a 5-fold axis and the z axis is a 2-fold edge axis.
    """
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    gens = [
        _axis_rotation(np.array([0.0, 1.0, phi]), 2 * np.pi / 5),
        np.diag([-1.0, -1.0, 1.0]),
    ]
    elements = _lex_sorted(_close_under_product(gens, 60))
    return _group_from_elements("icosahedral", elements)


_NAMED_GROUPS = {
    "octa": make_octahedral,
    "octahedral": make_octahedral,
    "icosa": make_icosahedral,
    "icosahedral": make_icosahedral,
}


def identity_group(dim: int) -> FiniteGroup:
    """The trivial group acting on R^dim; the no-symmetry baseline."""
    return _group_from_elements(f"id{dim}", np.eye(dim)[None, :, :])


def make_group(name: str) -> FiniteGroup:
    """Build a group from a short name: C<n>, D<n>, octa, icosa, id<d>, none."""
    key = name.strip().lower()
    if key in ("none", "c1", "trivial"):
        return make_cyclic(1)
    if key in _NAMED_GROUPS:
        return _NAMED_GROUPS[key]()
    if key.startswith("id") and key[2:].isdigit():
        return identity_group(int(key[2:]))
    if key.startswith("c") and key[1:].isdigit():
        return make_cyclic(int(key[1:]))
    if key.startswith("d") and key[1:].isdigit():
        return make_dihedral(int(key[1:]))
    raise GroupError(f"unknown group name {name!r}")


@dataclass(frozen=True)
class Representation:
    """Per-element matrices of a linear action of a finite group."""

    group: FiniteGroup
    dim_rep: int
    matrices: np.ndarray      # (order, dim_rep, dim_rep)
    name: str = ""

    def matrix(self, g_index: int) -> np.ndarray:
        return self.matrices[g_index]

    def homomorphism_residual(self) -> float:
        """Max over element pairs of |rho(g)rho(h) - rho(gh)|."""
        prods = np.einsum("iab,jbc->ijac", self.matrices, self.matrices)
        matched = self.matrices[self.group.product_table]
        return float(np.max(np.abs(prods - matched)))


def trivial_representation(group: FiniteGroup) -> Representation:
    mats = np.ones((group.order, 1, 1))
    return Representation(group, 1, mats, name="trivial")


def standard_representation(group: FiniteGroup) -> Representation:
    return Representation(group, group.dim, group.elements.copy(), name="standard")


def sign_representation(group: FiniteGroup) -> Representation:
    """1-dim determinant representation: trivial on rotations, -1 on reflections."""
    dets = np.array([np.linalg.det(e) for e in group.elements])
    mats = np.round(dets).reshape(-1, 1, 1)
    return Representation(group, 1, mats, name="sign")


def regular_representation(group: FiniteGroup) -> Representation:
    """Permutation matrices of left translation on the element list.

    rho(g) e_h = e_{gh}, so column h of rho(g) is the unit vector at index
    table[g, h].
    """
    n = group.order
    mats = np.zeros((n, n, n))
    for g in range(n):
        mats[g, group.product_table[g], np.arange(n)] = 1.0
    return Representation(group, n, mats, name="regular")


def direct_sum(reps: list[Representation]) -> Representation:
    """Block-diagonal sum of representations of the same group."""
    if not reps:
        raise GroupError("direct_sum needs at least one representation")
    group = reps[0].group
    for r in reps[1:]:
        if r.group is not group and not np.array_equal(
            r.group.elements, group.elements
        ):
            raise GroupError("direct_sum: representations of different groups")
    total = sum(r.dim_rep for r in reps)
    mats = np.zeros((group.order, total, total))
    off = 0
    for r in reps:
        mats[:, off : off + r.dim_rep, off : off + r.dim_rep] = r.matrices
        off += r.dim_rep
    name = "+".join(r.name or "?" for r in reps)
    return Representation(group, total, mats, name=name)


def rep_apply(rep: Representation, g_index: int, v: np.ndarray) -> np.ndarray:
    """Apply rho(g) to a vector (or to the rows of a batch)."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != rep.dim_rep:
        raise ValueError(
            f"vector of length {v.shape[-1]} does not match rep dim {rep.dim_rep}"
        )
    return v @ rep.matrices[g_index].T


def parse_rep(group: FiniteGroup, spec: str) -> Representation:
    """Parse a rep spec like 'standard', 'regular', 'trivial+standard'."""
    builders = {
        "trivial": trivial_representation,
        "standard": standard_representation,
        "sign": sign_representation,
        "regular": regular_representation,
    }
    parts = [p.strip() for p in spec.split("+") if p.strip()]
    if not parts:
        raise GroupError(f"empty representation spec {spec!r}")
    reps = []
    for p in parts:
        if p not in builders:
            raise GroupError(f"unknown representation {p!r}")
        reps.append(builders[p](group))
    return reps[0] if len(reps) == 1 else direct_sum(reps)
