"""Finite-horizon LQR on linearized dynamics, with steerability checks.

Dynamics are linearized by central finite differences at a state-action point
p; the backward Riccati recursion then yields time-indexed value matrices P_t
and feedback gains K_t.  For symmetric systems, A, B, K, P evaluated at
transformed points are conjugates of their values at the base point, which the
check functions verify by two-path evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .groups import FiniteGroup, Representation
from .steerable import OrbitDecomposition, TaggedPoint, rotation2


class IllPosedCostError(ValueError):
    """Raised when (R + B^T P B) is not positive definite."""


@dataclass(frozen=True)
class LinearizedDynamics:
    """First-order expansion s' ~ offset + A (s - s0) + B (a - a0) at p = (s0, a0)."""

    point: tuple[np.ndarray, np.ndarray]
    A: np.ndarray
    B: np.ndarray
    offset: np.ndarray
    fd_step: float


@dataclass(frozen=True)
class QuadraticCost:
    """Stage cost s^T Q s + a^T R a with Q PSD and R PD."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name, mat in (("Q", self.Q), ("R", self.R)):
            if np.max(np.abs(mat - mat.T)) > 1e-12:
                raise ValueError(f"{name} must be symmetric")
        if np.min(np.linalg.eigvalsh(self.R)) <= 0:
            raise IllPosedCostError("R must be positive definite")


@dataclass(frozen=True)
class RiccatiSolution:
    horizon: int
    P: list[np.ndarray]     # length horizon + 1, P[horizon] = Q
    K: list[np.ndarray]     # length horizon


def isotropic_cost(state_dim: int, action_dim: int, r_scale: float = 0.1) -> QuadraticCost:
    return QuadraticCost(Q=np.eye(state_dim), R=r_scale * np.eye(action_dim))


def linearize(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    p: tuple[np.ndarray, np.ndarray],
    fd_step: float = 1e-5,
) -> LinearizedDynamics:
    """Central-difference Jacobians of f with respect to state and action."""
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    s0, a0 = (np.asarray(v, dtype=float) for v in p)
    offset = np.asarray(f(s0, a0), dtype=float)
    if not np.all(np.isfinite(offset)):
        raise FloatingPointError("dynamics returned non-finite values")
    d_s, d_a = len(s0), len(a0)
    A = np.empty((len(offset), d_s))
    B = np.empty((len(offset), d_a))
    for j in range(d_s):
        dv = np.zeros(d_s)
        dv[j] = fd_step
        A[:, j] = (f(s0 + dv, a0) - f(s0 - dv, a0)) / (2 * fd_step)
    for j in range(d_a):
        dv = np.zeros(d_a)
        dv[j] = fd_step
        B[:, j] = (f(s0, a0 + dv) - f(s0, a0 - dv)) / (2 * fd_step)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise FloatingPointError("non-finite Jacobian entries")
    return LinearizedDynamics(point=(s0, a0), A=A, B=B, offset=offset, fd_step=fd_step)


def dare_recursion(
    dyn: LinearizedDynamics, cost: QuadraticCost, horizon: int
) -> RiccatiSolution:
    """Backward Riccati recursion from the terminal condition P_T = Q.

    P_t = Q + A^T P A - A^T P B (R + B^T P B)^-1 B^T P A,
    K_t = (R + B^T P B)^-1 B^T P A,
    solved through a symmetric positive-definite factorization.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    A, B = dyn.A, dyn.B
    P = [None] * (horizon + 1)
    K = [None] * horizon
    P[horizon] = cost.Q.copy()
    for t in range(horizon - 1, -1, -1):
        Pn = P[t + 1]
        G = cost.R + B.T @ Pn @ B
        try:
            chol = cho_factor((G + G.T) / 2.0)
        except np.linalg.LinAlgError as exc:
            raise IllPosedCostError("R + B^T P B is not positive definite") from exc
        Kt = cho_solve(chol, B.T @ Pn @ A)
        Pt = cost.Q + A.T @ Pn @ A - A.T @ Pn @ B @ Kt
        P[t] = (Pt + Pt.T) / 2.0
        K[t] = Kt
    return RiccatiSolution(horizon=horizon, P=P, K=K)


def _default_point_sampler(d_s: int, d_a: int) -> Callable:
    return lambda rng: (rng.standard_normal(d_s), rng.standard_normal(d_a))


def linearization_steerability_report(
    f: Callable,
    group: FiniteGroup,
    rep_S: Representation,
    rep_A: Representation,
    action_on_points: Callable | None = None,
    samples: int = 100,
    rng_seed: int = 0,
    sample_point: Callable | None = None,
    fd_step: float = 1e-5,
) -> dict:
    """Two-path residuals of the affine expansion of f under the group.

    Reports the kernel residuals of the Jacobians A and B together with the
    zeroth-order term |f(g.p) - rho_S(g) f(p)|; the latter is what exposes
    symmetry breaking that leaves Jacobians untouched (e.g. constant drift).
    """
    if action_on_points is None:
        action_on_points = lambda g, p: (
            rep_S.matrix(g) @ p[0],
            rep_A.matrix(g) @ p[1],
        )
    if sample_point is None:
        sample_point = _default_point_sampler(rep_S.dim_rep, rep_A.dim_rep)
    rng = np.random.default_rng(rng_seed)
    res_a = res_b = res_off = 0.0
    for _ in range(samples):
        g = int(rng.integers(group.order))
        p = sample_point(rng)
        gp = action_on_points(g, p)
        lin = linearize(f, p, fd_step)
        lin_g = linearize(f, gp, fd_step)
        rs, ra = rep_S.matrix(g), rep_A.matrix(g)
        rs_inv = rep_S.matrix(group.inv(g))
        ra_inv = rep_A.matrix(group.inv(g))
        res_a = max(res_a, float(np.max(np.abs(lin_g.A - rs @ lin.A @ rs_inv))))
        res_b = max(res_b, float(np.max(np.abs(lin_g.B - rs @ lin.B @ ra_inv))))
        res_off = max(res_off, float(np.max(np.abs(lin_g.offset - rs @ lin.offset))))
    return {
        "dynamics_kernel": res_a,
        "control_kernel": res_b,
        "offset": res_off,
        "max": max(res_a, res_b, res_off),
    }


def steerability_check_linearization(
    f: Callable,
    group: FiniteGroup,
    rep_S: Representation,
    rep_A: Representation,
    action_on_points: Callable | None = None,
    samples: int = 100,
    rng_seed: int = 0,
    sample_point: Callable | None = None,
    fd_step: float = 1e-5,
) -> float:
    report = linearization_steerability_report(
        f, group, rep_S, rep_A, action_on_points, samples, rng_seed, sample_point, fd_step
    )
    return report["max"]


def riccati_steerability_report(
    f: Callable,
    cost_field: Callable[[tuple], QuadraticCost],
    group: FiniteGroup,
    rep_S: Representation,
    rep_A: Representation,
    samples: int = 20,
    horizon: int = 20,
    rng_seed: int = 0,
    sample_point: Callable | None = None,
    fd_step: float = 1e-5,
) -> dict:
    """Residuals of the gain and value kernels across all time indices.

    K transforms with input rho_S and output rho_A; P with rho_S on both
    sides.  horizon 0 degenerates to a check of the terminal cost kernel.
    """
    if sample_point is None:
        sample_point = _default_point_sampler(rep_S.dim_rep, rep_A.dim_rep)
    rng = np.random.default_rng(rng_seed)
    res_k = res_p = 0.0
    for _ in range(samples):
        g = int(rng.integers(group.order))
        p = sample_point(rng)
        gp = (rep_S.matrix(g) @ p[0], rep_A.matrix(g) @ p[1])
        rs, ra = rep_S.matrix(g), rep_A.matrix(g)
        rs_inv = rep_S.matrix(group.inv(g))
        if horizon == 0:
            q_p, q_gp = cost_field(p).Q, cost_field(gp).Q
            res_p = max(res_p, float(np.max(np.abs(q_gp - rs @ q_p @ rs_inv))))
            continue
        sol = dare_recursion(linearize(f, p, fd_step), cost_field(p), horizon)
        sol_g = dare_recursion(linearize(f, gp, fd_step), cost_field(gp), horizon)
        for t in range(horizon + 1):
            res_p = max(
                res_p, float(np.max(np.abs(sol_g.P[t] - rs @ sol.P[t] @ rs_inv)))
            )
        for t in range(horizon):
            res_k = max(
                res_k, float(np.max(np.abs(sol_g.K[t] - ra @ sol.K[t] @ rs_inv)))
            )
    return {"gain_kernel": res_k, "value_kernel": res_p, "max": max(res_k, res_p)}


def steerability_check_riccati(
    f: Callable,
    cost_field: Callable[[tuple], QuadraticCost],
    group: FiniteGroup,
    rep_S: Representation,
    rep_A: Representation,
    samples: int = 20,
    horizon: int = 20,
    rng_seed: int = 0,
    sample_point: Callable | None = None,
    fd_step: float = 1e-5,
) -> float:
    report = riccati_steerability_report(
        f, cost_field, group, rep_S, rep_A, samples, horizon, rng_seed, sample_point, fd_step
    )
    return report["max"]


def block_rotation(theta: float, tags: tuple[str, ...]) -> np.ndarray:
    """Block-diagonal planar rotation acting on rho1 blocks, identity elsewhere."""
    blocks = [rotation2(theta) if t == "rho1" else np.eye(1) for t in tags]
    dim = sum(b.shape[0] for b in blocks)
    out = np.zeros((dim, dim))
    off = 0
    for b in blocks:
        k = b.shape[0]
        out[off : off + k, off : off + k] = b
        off += k
    return out


def equivariant_lqr_controller(
    base_solver: Callable[[TaggedPoint], np.ndarray],
    orbit_project: Callable[[TaggedPoint], OrbitDecomposition],
    point_of_state: Callable[[np.ndarray], TaggedPoint],
    state_tags: tuple[str, ...],
    action_tags: tuple[str, ...],
) -> Callable[[np.ndarray], np.ndarray]:
    """Feedback policy that solves the Riccati recursion only at orbit representatives.

    point_of_state builds the tagged linearization point (state plus nominal
    action) for a raw state vector.  Given the decomposition p = g_p . p_base,
    the gain at p is the conjugate rho_A(g_p) K(p_base) rho_S(g_p)^-1, so
    a = -rho_A(g_p) K(p_base) rho_S(g_p)^-1 s reproduces the per-point
    solution without re-solving.
    """

    def policy(s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        dec = orbit_project(point_of_state(s))
        kb = base_solver(dec.base_point)
        theta = dec.group_coordinate
        rho_a = block_rotation(theta, action_tags)
        rho_s_inv = block_rotation(-theta, state_tags)
        return -(rho_a @ kb @ rho_s_inv) @ s

    return policy
