"""Activation-network layers: a linear map whose node-wise polynomial activation
has coefficients produced from the pre-activations by a trainable branch.

For a layer with ``n`` output nodes and polynomial order ``K``::

    u   = W x + b                     pre-activation, shape [n]
    a_k = sum_j V[k, j] u_j + z[k, :] coefficients,   shape [K+1, n]
    y_i = sum_k a_k[i] * u_i ** k

With ``per_node_branch`` the branch term becomes ``V[k, i] * u_i`` instead of
the sum over all nodes, so each node's coefficients depend only on itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import Tensor


@dataclass(frozen=True)
class ActivationNetworkParams:
    W: Tensor   # [n_out, n_in] dense or [n_out, c_in, width] convolutional
    b: Tensor   # [n_out]
    V: Tensor   # [K+1, n_out]
    z: Tensor   # [K+1, n_out]
    per_node_branch: bool = False

    def __post_init__(self):
        n_out = self.W.shape[0]
        if self.b.shape != (n_out,):
            raise ValueError(f"bias shape {self.b.shape} does not match {n_out} output nodes")
        if self.V.shape != self.z.shape or self.V.ndim != 2 or self.V.shape[1] != n_out:
            raise ValueError(f"branch shapes V={self.V.shape} z={self.z.shape} inconsistent with n_out={n_out}")
        if self.V.shape[0] < 2:
            raise ValueError("polynomial order K must be >= 1")
        for name in ("W", "b", "V", "z"):
            if not np.all(np.isfinite(getattr(self, name).data)):
                raise ValueError(f"non-finite values in {name}")

    @property
    def K(self) -> int:
        return self.V.shape[0] - 1

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    @property
    def n_in(self) -> int:
        return int(np.prod(self.W.shape[1:]))

    @property
    def kernel_width(self) -> int | None:
        return self.W.shape[2] if len(self.W.shape) == 3 else None

    def tensors(self) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        return self.W, self.b, self.V, self.z


def polynomial_activation(u: Tensor, V: Tensor, z: Tensor, per_node: bool = False) -> Tensor:
    """Apply the branch-generated polynomial to pre-activations ``u`` [n x B]."""
    K1, n = z.shape
    B = u.shape[1]
    if per_node:
        coeff = nx.add(nx.mul(nx.reshape(V, (K1, n, 1)), nx.reshape(u, (1, n, B))),
                       nx.reshape(z, (K1, n, 1)))
    else:
        shared = nx.matmul(V, u)  # [K+1, B]
        coeff = nx.add(nx.reshape(shared, (K1, 1, B)), nx.reshape(z, (K1, n, 1)))
    powers = nx.stack([nx.elementwise_pow(u, k) for k in range(K1)])
    return nx.sum_(nx.mul(coeff, powers), axis=0)


def branch_coefficients(x, p: ActivationNetworkParams) -> np.ndarray:
    """Coefficient array ``a`` [K+1, n_out] for a single input vector (no graph)."""
    x = np.asarray(nx.as_tensor(x).data, dtype=np.float64)
    W = p.W.data.reshape(p.n_out, -1)
    u = W @ x + p.b.data
    if p.per_node_branch:
        return p.V.data * u[None, :] + p.z.data
    return (p.V.data @ u)[:, None] + p.z.data


def act_forward(x, p: ActivationNetworkParams) -> Tensor:
    """Dense layer on ``x`` of shape [n_in] or a column batch [n_in x B]."""
    x = nx.as_tensor(x)
    W = p.W if p.W.data.ndim == 2 else nx.reshape(p.W, (p.n_out, p.n_in))
    if x.shape[0] != p.n_in or x.data.ndim not in (1, 2):
        raise ValueError(f"input shape {x.shape} does not match layer input extent {p.n_in}")
    vector = x.data.ndim == 1
    cols = nx.reshape(x, (p.n_in, 1)) if vector else x
    u = nx.add(nx.matmul(W, cols), nx.reshape(p.b, (p.n_out, 1)))
    y = polynomial_activation(u, p.V, p.z, p.per_node_branch)
    return nx.reshape(y, (p.n_out,)) if vector else y


def act_conv_forward(x, p: ActivationNetworkParams, stride: int = 1, pad: int = 0) -> Tensor:
    """Convolutional layer: the dense layer applied to every Toeplitz column of ``x``."""
    x = nx.as_tensor(x)
    width = p.kernel_width
    if width is None:
        raise ValueError("convolutional layer needs W of shape [C_out, C_in, width]")
    if x.data.ndim != 2 or x.shape[0] != p.W.shape[1]:
        raise ValueError(f"input {x.shape} does not match kernel {p.W.shape}")
    return act_forward(nx.toeplitz_unroll(x, width, stride, pad), p)


def init_actnet(n_in: int, n_out: int, K: int, rng: np.random.Generator,
                width: int | None = None, per_node_branch: bool = False,
                requires_grad: bool = True) -> ActivationNetworkParams:
    """Fan-in scaled uniform weights; the branch starts as the identity polynomial.

    With ``V = 0`` and only ``z[1] = 1`` the layer is exactly ``W x + b`` at step 0.
    ``W`` has variance ``1 / fan_in``.
    """
    if n_in < 1 or n_out < 1 or K < 1:
        raise ValueError(f"invalid layer sizes n_in={n_in} n_out={n_out} K={K}")
    shape = (n_out, n_in) if width is None else (n_out, n_in, width)
    fan_in = n_in * (width or 1)
    limit = np.sqrt(3.0 / fan_in)
    z = np.zeros((K + 1, n_out))
    z[1] = 1.0
    return ActivationNetworkParams(
        W=Tensor(rng.uniform(-limit, limit, size=shape), requires_grad),
        b=Tensor(np.zeros(n_out), requires_grad),
        V=Tensor(np.zeros((K + 1, n_out)), requires_grad),
        z=Tensor(z, requires_grad),
        per_node_branch=per_node_branch,
    )
