"""Independent oracle implementations used to cross-check the library.

These deliberately avoid the library's own code paths: the intertwiner
dimension comes from the group-averaging projector (and the character inner
product), not from the stacked-constraint SVD.
"""

from __future__ import annotations

import numpy as np

from geomdp.groups import FiniteGroup, Representation


def projector_intertwiner_dimension(
    rep_in: Representation, rep_out: Representation
) -> int:
    """Rank of the group-average of rho_out(g) (x) rho_in(g) acting on matrices.

    For orthogonal representations the map M -> mean_g rho_out(g) M rho_in(g)^T
    is the orthogonal projector onto the intertwiner space; its rank (number
    of eigenvalues near 1) is the space's dimension.
    """
    group = rep_in.group
    dim = rep_out.dim_rep * rep_in.dim_rep
    acc = np.zeros((dim, dim))
    for g in range(group.order):
        acc += np.kron(rep_out.matrix(g), rep_in.matrix(g))
    acc /= group.order
    evals = np.linalg.eigvalsh((acc + acc.T) / 2.0)
    return int(np.sum(evals > 0.5))


def character_intertwiner_dimension(
    rep_in: Representation, rep_out: Representation
) -> int:
    """dim Hom = (1/|G|) sum_g trace(rho_out(g)) trace(rho_in(g^-1))."""
    group = rep_in.group
    total = 0.0
    for g in range(group.order):
        total += np.trace(rep_out.matrix(g)) * np.trace(rep_in.matrix(group.inv(g)))
    return int(round(total / group.order))


def signed_permutation_rotations() -> np.ndarray:
    """All 3x3 signed permutation matrices with determinant +1 (24 of them)."""
    from itertools import permutations, product

    mats = []
    for perm in permutations(range(3)):
        for signs in product((1.0, -1.0), repeat=3):
            m = np.zeros((3, 3))
            for row, col in enumerate(perm):
                m[row, col] = signs[row]
            if np.linalg.det(m) > 0:
                mats.append(m)
    return np.array(mats)


def rollout_cost(
    dynamics, s0: np.ndarray, gains: list[np.ndarray], Q: np.ndarray, R: np.ndarray
) -> float:
    """Total quadratic cost of playing a = -K_t s through the true dynamics."""
    s = np.asarray(s0, dtype=float)
    total = 0.0
    for K in gains:
        a = -K @ s
        total += float(s @ Q @ s + a @ R @ a)
        s = dynamics(s, a)
    total += float(s @ Q @ s)
    return total
