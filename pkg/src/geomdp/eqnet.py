"""Equivariant multilayer perceptrons over finite matrix groups.

Weights are parameterized directly by intertwiner-basis coefficients, so every
materialized layer commutes with the group action by construction and the
optimizer state lives in the reduced space.  Hidden features carry multiples
of the regular representation, which any pointwise nonlinearity respects.

Layers touching regular representations use structured materialization (group
circulants / matrix-entry maps) instead of dense basis stacks; the dense
stacks for a width-w hidden layer would need O(w^2 |G|) matrices of size w^2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .groups import FiniteGroup, Representation, direct_sum, regular_representation
from .steerable import KernelBasis, intertwiner_basis


def regular_rep_multiple(group: FiniteGroup, multiplicity: int) -> Representation:
    """multiplicity copies of the regular representation, tagged for fast paths."""
    reg = regular_representation(group)
    if multiplicity == 1:
        return reg
    return direct_sum([reg] * multiplicity)


def smooth_rectifier(z: np.ndarray) -> np.ndarray:
    """0.5 (z + sqrt(z^2 + 1)): a rectifier that is smooth everywhere.

    Smoothness keeps finite-difference gradient probes tight; the sqrt form
    runs several times faster than exp-based rectifiers on CPU.
    """
    return 0.5 * (z + np.sqrt(z * z + 1.0))


def smooth_rectifier_grad(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + z / np.sqrt(z * z + 1.0))


def project_weight(W: np.ndarray, rep_in: Representation, rep_out: Representation) -> np.ndarray:
    """Group-average W onto the space of maps commuting with the two actions."""
    W = np.asarray(W, dtype=float)
    if W.shape != (rep_out.dim_rep, rep_in.dim_rep):
        raise ValueError(
            f"weight shape {W.shape} does not match reps "
            f"({rep_out.dim_rep}, {rep_in.dim_rep})"
        )
    group = rep_in.group
    acc = np.zeros_like(W)
    for g in range(group.order):
        acc += rep_out.matrix(group.inv(g)) @ W @ rep_in.matrix(g)
    return acc / group.order


def trivial_subspace_basis(rep: Representation) -> np.ndarray:
    """Orthonormal basis (k, dim) of the subspace fixed by every rho(g)."""
    proj = rep.matrices.mean(axis=0)
    evals, evecs = np.linalg.eigh((proj + proj.T) / 2.0)
    keep = evals > 1.0 - 1e-9
    return evecs[:, keep].T


class _CoeffMap:
    """Linear map between coefficient vectors and materialized weights."""

    dimension: int

    def materialize(self, coeffs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def coeff_grad(self, dW: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class _DenseCoeffMap(_CoeffMap):
    """Backed by an explicit orthonormal basis stack (small layers)."""

    def __init__(self, basis: KernelBasis):
        self.kernel_basis = basis
        self.stack = basis.at()
        self.dimension = basis.dimension
        self._flat = self.stack.reshape(self.dimension, -1) if self.dimension else None

    def materialize(self, coeffs):
        if self.dimension == 0:
            raise ValueError("empty intertwiner space cannot carry weights")
        return np.tensordot(coeffs, self.stack, axes=1)

    def coeff_grad(self, dW):
        return self._flat @ dW.reshape(-1)


class _RegularToRegularMap(_CoeffMap):
    """Group-circulant blocks: W[ko,ki][p,q] = c[ko,ki, q^-1 p] / sqrt(n)."""

    def __init__(self, group: FiniteGroup, m_in: int, m_out: int):
        n = group.order
        # h_idx[p, q] = q^-1 p, so entry (p, q) of a block reads coefficient h
        self.h_idx = group.product_table[group.inverse_table].T.copy()
        self.n, self.m_in, self.m_out = n, m_in, m_out
        self.dimension = m_in * m_out * n
        self.scale = 1.0 / np.sqrt(n)

    def materialize(self, coeffs):
        c = coeffs.reshape(self.m_out, self.m_in, self.n)
        blocks = c[:, :, self.h_idx] * self.scale        # (mo, mi, n, n)
        return blocks.transpose(0, 2, 1, 3).reshape(
            self.m_out * self.n, self.m_in * self.n
        )

    def coeff_grad(self, dW):
        blocks = dW.reshape(self.m_out, self.n, self.m_in, self.n).transpose(0, 2, 1, 3)
        acc = np.zeros((self.n, self.m_out, self.m_in))
        np.add.at(
            acc,
            self.h_idx.reshape(-1),
            blocks.reshape(self.m_out, self.m_in, -1).transpose(2, 0, 1),
        )
        return acc.transpose(1, 2, 0).reshape(-1) * self.scale


class _IntoRegularMap(_CoeffMap):
    """Maps rho_in -> m copies of regular: row g of copy k is c_k^T rho(g^-1)."""

    def __init__(self, rep_in: Representation, m_out: int):
        group = rep_in.group
        self.inv_mats = rep_in.matrices[group.inverse_table]   # (n, d, d)
        self.n = group.order
        self.d = rep_in.dim_rep
        self.m_out = m_out
        self.dimension = m_out * self.d
        self.scale = 1.0 / np.sqrt(self.n)

    def materialize(self, coeffs):
        c = coeffs.reshape(self.m_out, self.d)
        rows = np.einsum("kd,gdj->kgj", c, self.inv_mats) * self.scale
        return rows.reshape(self.m_out * self.n, self.d)

    def coeff_grad(self, dW):
        blocks = dW.reshape(self.m_out, self.n, self.d)
        return (np.einsum("kgj,gdj->kd", blocks, self.inv_mats) * self.scale).reshape(-1)


class _FromRegularMap(_CoeffMap):
    """Maps m copies of regular -> rho_out: column g of copy k is rho(g) c_k."""

    def __init__(self, m_in: int, rep_out: Representation):
        self.mats = rep_out.matrices                            # (n, d, d)
        self.n = rep_out.group.order
        self.d = rep_out.dim_rep
        self.m_in = m_in
        self.dimension = m_in * self.d
        self.scale = 1.0 / np.sqrt(self.n)

    def materialize(self, coeffs):
        c = coeffs.reshape(self.m_in, self.d)
        cols = np.einsum("gdj,kj->dkg", self.mats, c) * self.scale
        return cols.reshape(self.d, self.m_in * self.n)

    def coeff_grad(self, dW):
        blocks = dW.reshape(self.d, self.m_in, self.n).transpose(1, 2, 0)  # (m, n, d)
        return (np.einsum("kgd,gdj->kj", blocks, self.mats) * self.scale).reshape(-1)


def _coeff_map_for(rep_in: Representation, rep_out: Representation) -> _CoeffMap:
    from .steerable import _regular_multiplicity

    m_in = _regular_multiplicity(rep_in)
    m_out = _regular_multiplicity(rep_out)
    if m_in is not None and m_out is not None:
        return _RegularToRegularMap(rep_in.group, m_in, m_out)
    if m_out is not None:
        return _IntoRegularMap(rep_in, m_out)
    if m_in is not None:
        return _FromRegularMap(m_in, rep_out)
    return _DenseCoeffMap(intertwiner_basis(rep_in, rep_out))


@dataclass
class LayerSpec:
    """One equivariant linear layer: W = sum_i c_i B_i, bias in the fixed subspace."""

    rep_in: Representation
    rep_out: Representation
    coeff_map: _CoeffMap
    coefficients: np.ndarray
    bias_basis: np.ndarray          # (n_bias, dim_out), orthonormal rows
    bias_coefficients: np.ndarray

    @property
    def basis(self) -> KernelBasis:
        """Dense intertwiner basis backing this layer (built on demand)."""
        if isinstance(self.coeff_map, _DenseCoeffMap):
            return self.coeff_map.kernel_basis
        return intertwiner_basis(self.rep_in, self.rep_out)

    @property
    def param_count(self) -> int:
        return len(self.coefficients) + len(self.bias_coefficients)

    def weight(self) -> np.ndarray:
        return self.coeff_map.materialize(self.coefficients)

    def bias(self) -> np.ndarray:
        if len(self.bias_coefficients) == 0:
            return np.zeros(self.rep_out.dim_rep)
        return self.bias_basis.T @ self.bias_coefficients


@dataclass
class EqMlp:
    """Equivariant MLP: linear layers with a pointwise smooth rectifier between.

    On regular-representation hidden features any pointwise map commutes with
    the permutation action, so the nonlinearity preserves equivariance.
    """

    layers: list[LayerSpec]
    width_strategy: str = "none"
    _cached_weights: list | None = field(default=None, repr=False)

    @property
    def rep_in(self) -> Representation:
        return self.layers[0].rep_in

    @property
    def rep_out(self) -> Representation:
        return self.layers[-1].rep_out

    @property
    def dim_in(self) -> int:
        return self.layers[0].rep_in.dim_rep

    @property
    def dim_out(self) -> int:
        return self.layers[-1].rep_out.dim_rep

    @property
    def param_count(self) -> int:
        return sum(l.param_count for l in self.layers)

    def _weights(self) -> list:
        if self._cached_weights is None:
            self._cached_weights = [(l.weight(), l.bias()) for l in self.layers]
        return self._cached_weights

    def invalidate(self) -> None:
        self._cached_weights = None

    def get_params(self) -> np.ndarray:
        return np.concatenate(
            [np.concatenate([l.coefficients, l.bias_coefficients]) for l in self.layers]
        )

    def set_params(self, flat: np.ndarray) -> None:
        off = 0
        for l in self.layers:
            k = len(l.coefficients)
            l.coefficients = flat[off : off + k].copy()
            off += k
            b = len(l.bias_coefficients)
            l.bias_coefficients = flat[off : off + b].copy()
            off += b
        if off != len(flat):
            raise ValueError("parameter vector length mismatch")
        self.invalidate()

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.dim_in:
            raise ValueError(f"input dim {h.shape[1]} != expected {self.dim_in}")
        for i, (W, b) in enumerate(self._weights()):
            h = h @ W.T + b
            if i < len(self.layers) - 1:
                h = smooth_rectifier(h)
        return h[0] if single else h

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        """Forward pass keeping per-layer inputs and pre-activations."""
        h = np.asarray(x, dtype=float)
        if h.ndim == 1:
            h = h[None, :]
        cache = []
        for i, (W, b) in enumerate(self._weights()):
            z = h @ W.T + b
            cache.append((h, z))
            h = smooth_rectifier(z) if i < len(self.layers) - 1 else z
        return h, cache

    def backward(self, cache: list, upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Gradients of sum(upstream * output) w.r.t. params and input.

        Returns (flat parameter gradient, gradient w.r.t. the input batch).
        """
        delta = np.asarray(upstream, dtype=float)
        if delta.ndim == 1:
            delta = delta[None, :]
        weights = self._weights()
        grads: list[np.ndarray] = []
        for i in reversed(range(len(self.layers))):
            h_in, z = cache[i]
            if i < len(self.layers) - 1:
                delta = delta * smooth_rectifier_grad(z)
            layer = self.layers[i]
            dW = delta.T @ h_in
            dc = layer.coeff_map.coeff_grad(dW)
            db = layer.bias_basis @ delta.sum(axis=0) if len(layer.bias_coefficients) else np.zeros(0)
            grads.append(np.concatenate([dc, db]))
            delta = delta @ weights[i][0]
        return np.concatenate(grads[::-1]), delta


def hidden_multiplicity_for(
    baseline_width: int, group_order: int, width_strategy: str
) -> int:
    """Regular-field count for a given baseline scalar width.

    sqrt scaling divides the baseline by sqrt(|G|) so the per-layer free
    parameter count (m^2 |G| between hidden layers) matches the dense
    baseline_width^2; linear scaling divides by |G| so feature dimensions
    match the baseline instead.
    """
    if width_strategy == "sqrt":
        return max(1, int(np.ceil(baseline_width / np.sqrt(group_order))))
    if width_strategy == "linear":
        return max(1, int(np.ceil(baseline_width / group_order)))
    if width_strategy == "none":
        return baseline_width
    raise ValueError(f"unknown width strategy {width_strategy!r}")


def eqmlp_init(
    in_rep: Representation,
    out_rep: Representation,
    hidden_multiplicity: int,
    depth: int,
    width_strategy: str = "none",
    rng_seed: int = 0,
) -> EqMlp:
    """Build an equivariant MLP with hidden reps = multiplicity x regular.

    hidden_multiplicity is the baseline scalar width; the strategy converts
    it into a regular-field count (see hidden_multiplicity_for).  depth is
    the number of linear layers; depth 1 is a single equivariant map.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    group = in_rep.group
    mult = hidden_multiplicity_for(hidden_multiplicity, group.order, width_strategy)
    hidden = regular_rep_multiple(group, mult)
    reps = [in_rep] + [hidden] * (depth - 1) + [out_rep]
    rng = np.random.default_rng(rng_seed)
    layers = []
    for rin, rout in zip(reps[:-1], reps[1:]):
        cmap = _coeff_map_for(rin, rout)
        if cmap.dimension == 0:
            raise ValueError(
                f"no equivariant maps exist from {rin.name} to {rout.name}"
            )
        fan_in_eff = max(1.0, cmap.dimension / rout.dim_rep)
        coeffs = rng.normal(0.0, 1.0 / np.sqrt(fan_in_eff), size=cmap.dimension)
        bias_basis = trivial_subspace_basis(rout)
        layers.append(
            LayerSpec(
                rep_in=rin,
                rep_out=rout,
                coeff_map=cmap,
                coefficients=coeffs,
                bias_basis=bias_basis,
                bias_coefficients=np.zeros(len(bias_basis)),
            )
        )
    return EqMlp(layers=layers, width_strategy=width_strategy)


def eqmlp_forward(net: EqMlp, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


def eqmlp_grad(net: EqMlp, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of sum(upstream * net(x)) w.r.t. the flat parameter vector."""
    _, cache = net.forward_cached(x)
    grad, _ = net.backward(cache, upstream)
    return grad


def equivariance_residual(
    net: EqMlp, n_inputs: int = 20, rng_seed: int = 0
) -> float:
    """Max two-path violation of rho_out(g) net(x) = net(rho_in(g) x)."""
    rng = np.random.default_rng(rng_seed)
    group = net.rep_in.group
    xs = rng.standard_normal((n_inputs, net.dim_in))
    outs = net.forward(xs)
    worst = 0.0
    for g in range(group.order):
        lhs = outs @ net.rep_out.matrix(g).T
        rhs = net.forward(xs @ net.rep_in.matrix(g).T)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


class SgdMomentum:
    """Plain stochastic gradient with momentum and a fixed step size."""

    def __init__(self, lr: float = 1e-3, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self.velocity: np.ndarray | None = None

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.velocity is None:
            self.velocity = np.zeros_like(params)
        self.velocity = self.momentum * self.velocity + grad
        return params - self.lr * self.velocity


class Adam:
    """Adam with bias correction; used where plain momentum trains too slowly."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(kind: str, lr: float) -> SgdMomentum | Adam:
    if kind == "sgd":
        return SgdMomentum(lr=lr)
    if kind == "adam":
        return Adam(lr=lr)
    raise ValueError(f"unknown optimizer {kind!r}")


CHECKPOINT_MAGIC = "geomdp-params-v1"


def save_checkpoint(
    path: str,
    nets: dict[str, EqMlp],
    group_name: str,
    rng_seed: int,
    extra: dict | None = None,
) -> None:
    """Write a JSON header line followed by the flat little-endian float64 params."""
    header: dict = {
        "magic": CHECKPOINT_MAGIC,
        "group": group_name,
        "rng_seed": rng_seed,
        "dtype": "<f8",
        "nets": {},
    }
    if extra:
        header["extra"] = extra
    chunks = []
    offset = 0
    for name, net in nets.items():
        flat = net.get_params()
        header["nets"][name] = {
            "offset": offset,
            "param_count": int(flat.size),
            "width_strategy": net.width_strategy,
            "layers": [
                {
                    "rep_in": l.rep_in.name,
                    "rep_out": l.rep_out.name,
                    "dim_in": l.rep_in.dim_rep,
                    "dim_out": l.rep_out.dim_rep,
                    "n_coeffs": len(l.coefficients),
                    "n_bias": len(l.bias_coefficients),
                }
                for l in net.layers
            ],
        }
        offset += flat.size
        chunks.append(flat)
    payload = np.concatenate(chunks) if chunks else np.zeros(0)
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(payload.astype("<f8").tobytes())


def load_checkpoint(path: str) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("magic") != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a geomdp checkpoint")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    return header, payload


def restore_params(nets: dict[str, EqMlp], header: dict, payload: np.ndarray) -> None:
    """Pour checkpoint parameters into freshly constructed nets, validating shapes."""
    for name, net in nets.items():
        meta = header["nets"].get(name)
        if meta is None:
            raise ValueError(f"checkpoint has no parameters for net {name!r}")
        if meta["param_count"] != net.param_count:
            raise ValueError(
                f"net {name!r}: checkpoint has {meta['param_count']} params, "
                f"model expects {net.param_count}"
            )
        off = meta["offset"]
        net.set_params(payload[off : off + meta["param_count"]].copy())
