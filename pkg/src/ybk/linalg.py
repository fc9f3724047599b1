"""Dense complex linear algebra and tensor-leg plumbing.

Conventions used by the whole package:

* Every operator is a dense square ``complex128`` numpy array, row-major.
* A Hilbert space with legs of dimensions ``dims`` orders its product basis
  exactly like iterated ``numpy.kron``: leg 0 is the leftmost (slowest)
  tensor factor.
* Lattice sites are enumerated right to left; site 1 is the *rightmost*
  site.  A chain of length L therefore puts site L on leg 0 and site 1 on
  leg L-1.  :class:`SiteEmbedding` owns this translation; nothing else in
  the package hardcodes it.

Everything here is pure: no function mutates its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, EmbeddingError, SingularityError

__all__ = [
    "kron", "permutation_op", "partial_trace", "partial_transpose",
    "permute_legs", "embed_on_legs", "SiteEmbedding", "embed",
    "mat_exp", "mat_inv", "frobenius_norm", "commutator_norm",
    "relative_commutator", "dagger", "proportionality_fit", "affine_fit",
]


def _as_complex(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    return a


def _check_dims(m: np.ndarray, dims) -> tuple:
    dims = tuple(int(d) for d in dims)
    if math.prod(dims) != m.shape[0]:
        raise DimensionError(f"leg dims {dims} do not factor size {m.shape[0]}")
    return dims


def kron(a, b) -> np.ndarray:
    """Kronecker product; entry ((i,k),(j,l)) = a[i,j] * b[k,l]."""
    return np.kron(_as_complex(a), _as_complex(b))


def kron_all(*mats) -> np.ndarray:
    out = _as_complex(mats[0])
    for m in mats[1:]:
        out = np.kron(out, _as_complex(m))
    return out


def permutation_op(local_dim: int) -> np.ndarray:
    """Swap operator P on C^d (x) C^d:  P |a,b> = |b,a>;  P^2 = 1."""
    d = int(local_dim)
    if d < 1:
        raise DimensionError("local_dim must be >= 1")
    idx = np.arange(d * d)
    a, b = divmod(idx, d)
    P = np.zeros((d * d, d * d), dtype=complex)
    P[idx, b * d + a] = 1.0
    return P


def permute_legs(m, dims, perm) -> np.ndarray:
    """Reorder the tensor legs of an operator.

    ``perm[i]`` is the old position of the leg placed at new position ``i``
    (the ``numpy.transpose`` convention), applied simultaneously to row and
    column indices.
    """
    m = _as_complex(m)
    dims = _check_dims(m, dims)
    n = len(dims)
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(n)):
        raise DimensionError(f"perm {perm} is not a permutation of 0..{n - 1}")
    t = m.reshape(dims + dims)
    axes = perm + tuple(p + n for p in perm)
    D = m.shape[0]
    return np.ascontiguousarray(t.transpose(axes).reshape(D, D))


def partial_trace(m, dims, traced_leg: int) -> np.ndarray:
    """Trace out one leg; the remaining legs keep their relative order."""
    m = _as_complex(m)
    dims = _check_dims(m, dims)
    n = len(dims)
    if not 0 <= traced_leg < n:
        raise DimensionError(f"traced leg {traced_leg} out of range for {n} legs")
    t = m.reshape(dims + dims)
    out = np.trace(t, axis1=traced_leg, axis2=traced_leg + n)
    D = m.shape[0] // dims[traced_leg]
    return np.ascontiguousarray(out.reshape(D, D))


def partial_transpose(m, dims, leg: int) -> np.ndarray:
    """Transpose a single leg (swap its row and column indices)."""
    m = _as_complex(m)
    dims = _check_dims(m, dims)
    n = len(dims)
    if not 0 <= leg < n:
        raise DimensionError(f"leg {leg} out of range for {n} legs")
    t = m.reshape(dims + dims)
    axes = list(range(2 * n))
    axes[leg], axes[leg + n] = axes[leg + n], axes[leg]
    D = m.shape[0]
    return np.ascontiguousarray(t.transpose(axes).reshape(D, D))


def embed_on_legs(gate, dims, legs) -> np.ndarray:
    """Act with ``gate`` on the listed legs (in that order), identity elsewhere.

    ``legs`` fixes which tensor factor of the gate lands where: the gate's
    first factor goes to ``legs[0]`` and so on.  Legs need not be adjacent
    or ordered.
    """
    gate = _as_complex(gate)
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    legs = tuple(int(l) for l in legs)
    if len(set(legs)) != len(legs):
        raise EmbeddingError(f"legs {legs} collide")
    if any(not 0 <= l < n for l in legs):
        raise EmbeddingError(f"legs {legs} out of range for {n} legs")
    if math.prod(dims[l] for l in legs) != gate.shape[0]:
        raise DimensionError(
            f"gate of size {gate.shape[0]} does not fit legs {legs} of dims {dims}"
        )
    rest = [i for i in range(n) if i not in legs]
    d_rest = math.prod(dims[i] for i in rest) if rest else 1
    big = np.kron(gate, np.eye(d_rest, dtype=complex))
    order = list(legs) + rest          # current leg order of `big`
    inv = [order.index(j) for j in range(n)]
    return permute_legs(big, [dims[o] for o in order], inv)


@dataclass(frozen=True)
class SiteEmbedding:
    """Where a gate acts on a right-to-left enumerated chain.

    Site 1 is the rightmost lattice site, so site s lives on tensor leg
    ``chain_length - s`` (leg 0 is leftmost).
    """

    chain_length: int
    local_dim: int
    target_sites: tuple

    def __post_init__(self):
        sites = tuple(int(s) for s in self.target_sites)
        object.__setattr__(self, "target_sites", sites)
        if self.chain_length < 1 or self.local_dim < 1:
            raise EmbeddingError("chain_length and local_dim must be positive")
        if len(set(sites)) != len(sites):
            raise EmbeddingError(f"target sites {sites} collide")
        if any(not 1 <= s <= self.chain_length for s in sites):
            raise EmbeddingError(
                f"target sites {sites} outside chain of length {self.chain_length}"
            )

    def legs(self) -> tuple:
        return tuple(self.chain_length - s for s in self.target_sites)

    def dims(self) -> tuple:
        return (self.local_dim,) * self.chain_length


def embed(gate, emb: SiteEmbedding) -> np.ndarray:
    """Embed a gate on the sites named by ``emb``; identity on the rest."""
    return embed_on_legs(gate, emb.dims(), emb.legs())


def mat_exp(m) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring Pade, via scipy)."""
    return scipy.linalg.expm(_as_complex(m))


def mat_inv(m, cond_limit: float = 1e12) -> np.ndarray:
    """Inverse with a condition-number guard against silent garbage."""
    m = _as_complex(m)
    c = np.linalg.cond(m)
    if not np.isfinite(c) or c > cond_limit:
        raise SingularityError("matrix inverse", f"condition estimate {c:.3e}")
    return np.linalg.inv(m)


def frobenius_norm(m) -> float:
    return float(np.linalg.norm(np.asarray(m)))


def dagger(m) -> np.ndarray:
    return _as_complex(m).conj().T


def commutator_norm(a, b) -> float:
    a = _as_complex(a)
    b = _as_complex(b)
    return float(np.linalg.norm(a @ b - b @ a))


def relative_commutator(a, b) -> float:
    """||[a,b]|| / (||a|| ||b||); 0 for a zero factor."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return commutator_norm(a, b) / float(na * nb)


def proportionality_fit(target, basis) -> tuple:
    """Least-squares scalar c minimizing ||target - c*basis||.

    Returns (c, relative residual); the residual is normalized by
    ||target|| (or absolute if target vanishes).
    """
    t = np.asarray(target, dtype=complex).ravel()
    b = np.asarray(basis, dtype=complex).ravel()
    denom = np.vdot(b, b)
    c = complex(np.vdot(b, t) / denom) if abs(denom) > 0 else 0.0
    res = np.linalg.norm(t - c * b)
    nt = np.linalg.norm(t)
    return c, float(res / nt if nt > 0 else res)


def affine_fit(target, basis) -> tuple:
    """Least-squares (c, d) minimizing ||target - c*basis - d*I||.

    Returns (c, d, relative residual).  Used wherever operators are only
    defined modulo multiples of the identity.
    """
    t = np.asarray(target, dtype=complex)
    b = np.asarray(basis, dtype=complex)
    eye = np.eye(t.shape[0], dtype=complex)
    A = np.stack([b.ravel(), eye.ravel()], axis=1)
    coeffs, *_ = np.linalg.lstsq(A, t.ravel(), rcond=None)
    c, d = (complex(x) for x in coeffs)
    res = np.linalg.norm(t - c * b - d * eye)
    nt = np.linalg.norm(t)
    return c, d, float(res / nt if nt > 0 else res)
