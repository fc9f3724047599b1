"""Monodromy and transfer matrices: periodic, open (double-row) and twisted.

Everything is assembled as a dense matrix on aux (x) chain, with the
auxiliary space on leg 0 and chain sites enumerated right to left (site 1
is the rightmost leg).  The R-provider is any callable u -> d^2 x d^2
matrix; use :func:`ybk.models.provider_for` for the catalog gates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SideMismatchError, TwistError, YbkError
from .linalg import (
    embed_on_legs, frobenius_norm, kron, partial_trace, relative_commutator,
)

__all__ = [
    "ChainSpec", "monodromy", "transfer_periodic", "transfer_open",
    "transfer_twisted", "rtt_residual", "floquet_inhomogeneities",
]


@dataclass(frozen=True)
class ChainSpec:
    """Lattice geometry plus the inhomogeneity data of a transfer matrix.

    ``trotter_step`` is the staggering parameter of the circuit
    construction (the kappa of the two-step Floquet drive, distinct from
    boundary kappa_ij parameters).
    """

    length: int
    local_dim: int = 4
    boundary: str = "periodic"  # periodic | open | twisted
    inhomogeneities: tuple = ()
    trotter_step: complex = 0.0
    twist: object = None  # local_dim x local_dim matrix for boundary="twisted"

    def __post_init__(self):
        if self.length < 1:
            raise YbkError("chain length must be positive")
        if self.local_dim not in (2, 4):
            raise YbkError("local dimension must be 2 (single) or 4 (doubled)")
        if self.boundary not in ("periodic", "open", "twisted"):
            raise YbkError(f"unknown boundary {self.boundary!r}")
        w = tuple(complex(x) for x in self.inhomogeneities)
        if w and len(w) != self.length:
            raise YbkError("inhomogeneity vector length must match the chain")
        object.__setattr__(self, "inhomogeneities", w)
        if self.boundary == "twisted":
            if self.twist is None:
                raise YbkError("twisted boundary needs a twist matrix")
            G = np.asarray(self.twist, dtype=complex)
            if G.shape != (self.local_dim, self.local_dim):
                raise YbkError("twist matrix must act on one site")
            object.__setattr__(self, "twist", G)

    @property
    def w(self) -> tuple:
        return self.inhomogeneities or (0.0,) * self.length

    def dims(self) -> tuple:
        return (self.local_dim,) * (self.length + 1)  # leg 0 is auxiliary

    def site_leg(self, site: int) -> int:
        if not 1 <= site <= self.length:
            raise YbkError(f"site {site} outside chain of length {self.length}")
        return 1 + self.length - site

    def with_inhomogeneities(self, w) -> "ChainSpec":
        return ChainSpec(self.length, self.local_dim, self.boundary,
                         tuple(w), self.trotter_step, self.twist)


def floquet_inhomogeneities(length: int, step: complex, boundary: str) -> tuple:
    """The staggered inhomogeneity pattern of the two-step Floquet drive.

    Open chains (odd length) carry +step on odd sites; periodic and
    twisted chains (even length) carry +step on even sites.
    """
    step = complex(step)
    if boundary == "open":
        if length % 2 == 0:
            raise YbkError("open-boundary circuits need an odd chain length")
        return tuple(step if s % 2 == 1 else -step for s in range(1, length + 1))
    if length % 2 == 1:
        raise YbkError(f"{boundary} circuits need an even chain length")
    return tuple(step if s % 2 == 0 else -step for s in range(1, length + 1))


def _check_twist(chain: ChainSpec, R) -> None:
    G = chain.twist
    GG = kron(G, G)
    for x in (0.19 + 0.06j, -0.27 + 0.13j, 0.33 - 0.08j):
        Rx = R(x)
        if frobenius_norm(Rx @ GG - GG @ Rx) > 1e-9 * max(1.0, frobenius_norm(Rx)):
            raise TwistError("twist matrix does not commute with R (x) two twists")


def monodromy(chain: ChainSpec, R, u: complex, hat: bool = False) -> np.ndarray:
    """Ordered product of gates along the chain, auxiliary space on leg 0.

    Plain: R_{0L}(u - w_L) ... R_{01}(u - w_1).
    Hat:   R_{10}(u + w_1) ... R_{L0}(u + w_L).
    """
    dims = chain.dims()
    L = chain.length
    w = chain.w
    D = int(np.prod(dims))
    T = np.eye(D, dtype=complex)
    if not hat:
        for s in range(L, 0, -1):
            T = T @ embed_on_legs(R(u - w[s - 1]), dims, (0, chain.site_leg(s)))
    else:
        for s in range(1, L + 1):
            T = T @ embed_on_legs(R(u + w[s - 1]), dims, (chain.site_leg(s), 0))
    return T


def transfer_periodic(chain: ChainSpec, R, u: complex) -> np.ndarray:
    """tr_aux of the monodromy."""
    return partial_trace(monodromy(chain, R, u), chain.dims(), 0)


def transfer_twisted(chain: ChainSpec, R, u: complex) -> np.ndarray:
    """tr_aux of G_aux times the monodromy; requires [R, G (x) G] = 0."""
    _check_twist(chain, R)
    dims = chain.dims()
    G0 = embed_on_legs(chain.twist, dims, (0,))
    return partial_trace(G0 @ monodromy(chain, R, u), dims, 0)


def transfer_open(chain: ChainSpec, R, KL, KR, u: complex) -> np.ndarray:
    """Double-row transfer matrix tr_aux( K^L T(u,w) K^R T_hat(u,w) )."""
    for K, side in ((KL, "left"), (KR, "right")):
        if getattr(K, "side", side) != side:
            raise SideMismatchError(f"expected a {side} boundary matrix")
    dims = chain.dims()
    KL0 = embed_on_legs(KL(u), dims, (0,))
    KR0 = embed_on_legs(KR(u), dims, (0,))
    prod = KL0 @ monodromy(chain, R, u) @ KR0 @ monodromy(chain, R, u, hat=True)
    return partial_trace(prod, dims, 0)


def transfer(chain: ChainSpec, R, u: complex, KL=None, KR=None) -> np.ndarray:
    if chain.boundary == "periodic":
        return transfer_periodic(chain, R, u)
    if chain.boundary == "twisted":
        return transfer_twisted(chain, R, u)
    return transfer_open(chain, R, KL, KR, u)


def rtt_residual(chain: ChainSpec, R, u1: complex, u2: complex) -> float:
    """|| R12 T1 T2 - T2 T1 R12 || on aux1 (x) aux2 (x) chain."""
    d = chain.local_dim
    L = chain.length
    dims = (d, d) + (d,) * L
    D = int(np.prod(dims))
    w = chain.w

    def mono(aux_leg, u):
        T = np.eye(D, dtype=complex)
        for s in range(L, 0, -1):
            T = T @ embed_on_legs(R(u - w[s - 1]), dims, (aux_leg, 2 + L - s))
        return T

    R12 = embed_on_legs(R(u1 - u2), dims, (0, 1))
    T1 = mono(0, u1)
    T2 = mono(1, u2)
    return frobenius_norm(R12 @ T1 @ T2 - T2 @ T1 @ R12)


def commutation_residual(chain: ChainSpec, R, u: complex, v: complex,
                         KL=None, KR=None) -> float:
    """Relative norm of [t(u), t(v)] for the chain's boundary type."""
    tu = transfer(chain, R, u, KL, KR)
    tv = transfer(chain, R, v, KL, KR)
    return relative_commutator(tu, tv)
