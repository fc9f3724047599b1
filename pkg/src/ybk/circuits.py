"""Two-step Floquet brickwork circuits and their integrability checks.

A circuit is fixed by a :class:`~ybk.transfer.ChainSpec` (with its
``trotter_step``), a model, and for open boundaries a left/right pair of
boundary matrices.  The propagator is assembled twice: from the gate list
and from the transfer matrix at the Floquet point; the two constructions
agree up to one overall scalar, which is fitted and reported rather than
assumed (boundary families carry u-dependent normalizations).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularityError, YbkError
from .linalg import (
    embed_on_legs, frobenius_norm, kron, mat_exp, mat_inv, partial_trace,
    permutation_op, proportionality_fit, relative_commutator,
)
from .models import ModelSpec, provider_for
from .report import ResidualReport
from .sampling import rng_from, spectral_points
from .transfer import ChainSpec, floquet_inhomogeneities, transfer

__all__ = [
    "CircuitSpec", "FloquetResult", "bulk_gate", "boundary_gate_left",
    "unitarize", "floquet_periodic", "floquet_open", "floquet_twisted",
    "UnitarityRegime", "unitarity_regimes", "check_unitarity_regime",
    "trotter_limit_error",
]


@dataclass(frozen=True)
class CircuitSpec:
    chain: ChainSpec
    model: ModelSpec
    kl: object = None   # KMatrixFn for the left boundary
    kr: object = None   # KMatrixFn for the right boundary
    gate_normalization: str = "raw"  # raw | unitarized

    def __post_init__(self):
        if self.gate_normalization not in ("raw", "unitarized"):
            raise YbkError("gate_normalization must be 'raw' or 'unitarized'")
        if self.chain.boundary == "open":
            if self.chain.length % 2 == 0:
                raise YbkError("open-boundary circuits need an odd chain length")
            if self.kl is None or self.kr is None:
                raise YbkError("open-boundary circuits need both boundary matrices")
        else:
            if self.chain.length % 2 == 1:
                raise YbkError(f"{self.chain.boundary} circuits need an even length")
            if self.kl is not None or self.kr is not None:
                raise YbkError("closed circuits take no boundary matrices")

    def provider(self):
        return provider_for(self.model, self.chain.local_dim)


@dataclass
class FloquetResult:
    M: np.ndarray
    u_odd: np.ndarray
    u_even: np.ndarray
    transfer_residual: float | None = None
    transfer_scalar: complex | None = None
    gate_scalars: dict = field(default_factory=dict)


def unitarize(g) -> tuple:
    """Divide a gate by the square root of its unitarity scalar.

    For gates with g^dag g = c * 1 this returns an exactly unitary matrix;
    in general it returns g / sqrt((g^dag g)[0,0]) and the caller inspects
    the leftover defect.
    """
    g = np.asarray(g, dtype=complex)
    c = complex((g.conj().T @ g)[0, 0])
    if abs(c) < 1e-300:
        raise SingularityError("unitarization scalar", c)
    return g / np.sqrt(c), c


def bulk_gate(model: ModelSpec, step: complex, local_dim: int = 4,
              unitarized: bool = False):
    """The brickwork bulk gate U = P R(2 * step)."""
    R = provider_for(model, local_dim)
    U = permutation_op(local_dim) @ R(2 * step)
    if unitarized:
        U, c = unitarize(U)
        return U, c
    return U, 1.0 + 0.0j


def boundary_gate_left(KL, R, step: complex, local_dim: int = 4,
                       unitarized: bool = False):
    """The contracted left boundary gate tr_aux( K^L(step) R(2*step) P ).

    ``R``'s first tensor factor is the auxiliary space, its second the
    boundary site; the result is a one-site gate.
    """
    d = local_dim
    dims = (d, d)
    eye = np.eye(d, dtype=complex)
    P = permutation_op(d)
    g = partial_trace(kron(KL(step), eye) @ R(2 * step) @ P, dims, 0)
    if unitarized:
        g, c = unitarize(g)
        return g, c
    return g, 1.0 + 0.0j


def _layer(gates_and_sites, L, d):
    """Product of mutually disjoint embedded gates."""
    dims = (d,) * L
    out = np.eye(d ** L, dtype=complex)
    for gate, sites in gates_and_sites:
        legs = tuple(L - s for s in sites)
        out = out @ embed_on_legs(gate, dims, legs)
    return out


def floquet_periodic(spec: CircuitSpec, verify: bool = True) -> FloquetResult:
    """M = U_odd U_even, equal to t(-k)^{-1} t(k) up to a fitted scalar."""
    chain = spec.chain
    if chain.boundary != "periodic":
        raise YbkError("floquet_periodic needs a periodic chain")
    L, d = chain.length, chain.local_dim
    k = chain.trotter_step
    uni = spec.gate_normalization == "unitarized"
    U, cU = bulk_gate(spec.model, k, d, unitarized=uni)
    odd = _layer([(U, (2 * j - 1, 2 * j)) for j in range(1, L // 2 + 1)], L, d)
    even = _layer(
        [(U, (2 * j, 2 * j + 1 if 2 * j + 1 <= L else 1)) for j in range(1, L // 2 + 1)],
        L, d)
    M = odd @ even
    res = FloquetResult(M, odd, even, gate_scalars={"bulk": cU})
    if verify:
        R = spec.provider()
        w = floquet_inhomogeneities(L, k, "periodic")
        ch = chain.with_inhomogeneities(w)
        Mt = mat_inv(transfer(ch, R, -k)) @ transfer(ch, R, k)
        c, rel = proportionality_fit(Mt, M)
        res.transfer_residual = rel
        res.transfer_scalar = c
    return res


def floquet_open(spec: CircuitSpec, verify: bool = True) -> FloquetResult:
    """M = U_even U_odd = t(k) with the staggered inhomogeneities.

    U_odd carries the contracted left gate, U_even the right K matrix.
    """
    chain = spec.chain
    if chain.boundary != "open":
        raise YbkError("floquet_open needs an open chain")
    L, d = chain.length, chain.local_dim
    k = chain.trotter_step
    uni = spec.gate_normalization == "unitarized"
    R = spec.provider()
    U, cU = bulk_gate(spec.model, k, d, unitarized=uni)
    Kbar, cL = boundary_gate_left(spec.kl, R, k, d, unitarized=uni)
    KR = spec.kr(k)
    cR = 1.0 + 0.0j
    if uni:
        KR, cR = unitarize(KR)
    odd = _layer([(Kbar, (L,))] + [(U, (2 * j - 1, 2 * j)) for j in range(1, (L - 1) // 2 + 1)], L, d)
    even = _layer([(U, (2 * j, 2 * j + 1)) for j in range(1, (L - 1) // 2 + 1)] + [(KR, (1,))], L, d)
    M = even @ odd
    res = FloquetResult(M, odd, even,
                        gate_scalars={"bulk": cU, "left": cL, "right": cR})
    if verify:
        w = floquet_inhomogeneities(L, k, "open")
        ch = chain.with_inhomogeneities(w)
        t = transfer(ch, R, k, KL=spec.kl, KR=spec.kr)
        c, rel = proportionality_fit(t, M)
        res.transfer_residual = rel
        res.transfer_scalar = c
    return res


def floquet_twisted(spec: CircuitSpec, verify: bool = True) -> FloquetResult:
    """Twisted drive: the wrap gate is conjugated by the twist on site L."""
    chain = spec.chain
    if chain.boundary != "twisted":
        raise YbkError("floquet_twisted needs a twisted chain")
    L, d = chain.length, chain.local_dim
    k = chain.trotter_step
    uni = spec.gate_normalization == "unitarized"
    U, cU = bulk_gate(spec.model, k, d, unitarized=uni)
    G = np.asarray(chain.twist, dtype=complex)
    Ginv = mat_inv(G)
    dims = (d,) * L
    GL = embed_on_legs(G, dims, (0,))
    GLinv = embed_on_legs(Ginv, dims, (0,))
    # wrap gate conjugated as in the circuit picture: G^-1 U_{L,1} G on site L
    wrap = GLinv @ _layer([(U, (L, 1))], L, d) @ GL
    layer1 = _layer([(U, (2 * j - 1, 2 * j)) for j in range(1, L // 2 + 1)], L, d)
    layer2 = _layer([(U, (2 * j, 2 * j + 1)) for j in range(1, L // 2)], L, d) @ wrap
    M = layer1 @ layer2
    res = FloquetResult(M, layer1, layer2, gate_scalars={"bulk": cU})
    if verify:
        R = spec.provider()
        w = floquet_inhomogeneities(L, k, "twisted")
        ch = chain.with_inhomogeneities(w)
        Mt = mat_inv(transfer(ch, R, -k)) @ transfer(ch, R, k)
        c, rel = proportionality_fit(Mt, M)
        res.transfer_residual = rel
        res.transfer_scalar = c
    return res


def floquet(spec: CircuitSpec, verify: bool = True) -> FloquetResult:
    return {"periodic": floquet_periodic, "open": floquet_open,
            "twisted": floquet_twisted}[spec.chain.boundary](spec, verify)


def floquet_commutation(spec: CircuitSpec, zs) -> float:
    """max over z of the relative norm of [M, t(z)]."""
    R = spec.provider()
    chain = spec.chain
    w = floquet_inhomogeneities(chain.length, chain.trotter_step, chain.boundary)
    ch = chain.with_inhomogeneities(w)
    M = floquet(spec, verify=False).M
    worst = 0.0
    for z in zs:
        t = transfer(ch, R, z, KL=spec.kl, KR=spec.kr)
        worst = max(worst, relative_commutator(M, t))
    return worst


# ----------------------------------------------------------------------
# unitarity regimes
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class UnitarityRegime:
    """A parameter slice in which a circuit gate is unitarizable.

    ``u_domain`` constrains the gate's spectral argument, ``kappa_domain``
    the boundary constants, ``ties`` lists parameter pairs set equal, and
    ``model_param`` constrains gamma / psi where applicable.  ``gate`` is
    one of ``bulk``, ``kR``, ``kLbar``; K gates name their family key.
    """

    name: str
    model: str               # xxx | xxz | xx | xxh | xxh1
    gate: str                # bulk | kR | kLbar
    family: str | None = None
    u_domain: str = "imag"   # imag | real
    kappa_domain: str = "real"
    ties: tuple = ()
    model_param: str | None = None  # real | imag for gamma / psi


def unitarity_regimes() -> list:
    """The published regime catalog, one entry per (gate, parameter slice)."""
    regs = []
    # bulk gates: only the spectral-argument condition (plus gamma/psi domain)
    regs.append(UnitarityRegime("xxx/bulk/uI", "xxx", "bulk", u_domain="imag"))
    regs.append(UnitarityRegime("xxz/bulk/uI", "xxz", "bulk", u_domain="imag", model_param="imag"))
    regs.append(UnitarityRegime("xxz/bulk/uR", "xxz", "bulk", u_domain="real", model_param="real"))
    regs.append(UnitarityRegime("xx/bulk/uI", "xx", "bulk", u_domain="imag"))
    regs.append(UnitarityRegime("xxh/bulk/uI", "xxh", "bulk", u_domain="imag", model_param="real"))
    regs.append(UnitarityRegime("xxh/bulk/uR", "xxh", "bulk", u_domain="real", model_param="imag"))
    regs.append(UnitarityRegime("xxh1/bulk/uI", "xxh1", "bulk", u_domain="imag"))

    ties_6v = ((((1, 2), "k"), ((2, 1), "k")), (((1, 2), "kt"), ((2, 1), "kt")))
    ties_xxnf = ((((1, 4), "k"), ((4, 1), "k")), (((2, 3), "k"), ((3, 2), "k")))
    ties_xxhnf = ((((1, 4), "k"), ((4, 1), "k")),)
    for gate in ("kR", "kLbar"):
        side = "right" if gate == "kR" else "left"
        for dom, kdom, mp in (("imag", "real", "real"), ("real", "imag", "imag")):
            tag = "uI" if dom == "imag" else "uR"
            regs.append(UnitarityRegime(f"xxx/{gate}/f/{tag}", "xxx", gate,
                                        f"xxx/{side}/f", dom, kdom, ties_6v))
            regs.append(UnitarityRegime(f"xxz/{gate}/f/{tag}", "xxz", gate,
                                        f"xxz/{side}/f", dom, kdom, ties_6v, mp))
            regs.append(UnitarityRegime(f"xx/{gate}/f/{tag}", "xx", gate,
                                        f"xx/{side}/f", dom, kdom, ties_6v))
            regs.append(UnitarityRegime(f"xx/{gate}/nf/{tag}", "xx", gate,
                                        f"xx/{side}/nf", dom, kdom, ties_xxnf))
            regs.append(UnitarityRegime(f"xxh/{gate}/nf/{tag}", "xxh", gate,
                                        f"xxh/{side}/nf", dom, kdom, ties_xxhnf,
                                        mp if gate == "kLbar" else None))
            regs.append(UnitarityRegime(f"xxh/{gate}/f/{tag}", "xxh", gate,
                                        f"xxh/{side}/f", dom, kdom, (),
                                        mp if gate == "kLbar" else None))
            regs.append(UnitarityRegime(f"xxh1/{gate}/nf/{tag}", "xxh1", gate,
                                        f"xxh1/{side}/nf", dom, kdom, ties_xxhnf))
            regs.append(UnitarityRegime(f"xxh1/{gate}/f/{tag}", "xxh1", gate,
                                        f"xxh1/{side}/f", dom, kdom, ()))
    return regs


def _draw_value(rng, domain, lo=0.1, hi=0.7):
    x = rng.uniform(lo, hi) * rng.choice([-1.0, 1.0])
    return 1j * x if domain == "imag" else complex(x)


def _regime_model(regime: UnitarityRegime, rng) -> ModelSpec:
    if regime.model == "xxz":
        g = _draw_value(rng, regime.model_param or "real", 0.2, 0.8)
        return ModelSpec.xxz(g)
    if regime.model == "xxh":
        p = _draw_value(rng, regime.model_param or "real", 0.3, 1.1)
        return ModelSpec.xxh(p)
    return ModelSpec(regime.model)


def _regime_kappas(regime: UnitarityRegime, rng, conjugate_reading=False):
    from .reflection import family_parameters
    slots_k, slots_t = family_parameters(regime.family)
    kap = {s: _draw_value(rng, regime.kappa_domain, 0.05, 0.6) for s in slots_k}
    kapt = {s: _draw_value(rng, regime.kappa_domain, 0.05, 0.6) for s in slots_t}
    for (a, grp_a), (b, grp_b) in regime.ties:
        src = kap if grp_a == "k" else kapt
        dst = kap if grp_b == "k" else kapt
        if b in dst:
            dst[b] = src[a].conjugate() if conjugate_reading else src[a]
    return kap, kapt


def regime_gate(regime: UnitarityRegime, rng, conjugate_reading=False) -> np.ndarray:
    """One random gate drawn inside the regime (not yet unitarized)."""
    from .reflection import k_family
    model = _regime_model(regime, rng)
    step = _draw_value(rng, regime.u_domain, 0.08, 0.45)
    if regime.gate == "bulk":
        U, _ = bulk_gate(model, step / 2, 4)  # gate argument 2*kappa = step
        return U
    kap, kapt = _regime_kappas(regime, rng, conjugate_reading)
    kfn = k_family(regime.family, model, kappa=kap, kappa_tilde=kapt)
    if regime.gate == "kR":
        return kfn(step)
    R = provider_for(model, 4)
    g, _ = boundary_gate_left(kfn, R, step, 4)
    return g


def check_unitarity_regime(regime: UnitarityRegime, samples: int = 10,
                           seed: int = 42) -> ResidualReport:
    """Sample the regime and report the worst unitarity defect.

    Where the regime ties parameters, the literal-equality reading is the
    one checked; the conjugate reading is also evaluated and recorded in
    the metadata whenever the two differ (imaginary-constant slices).
    """
    rep = ResidualReport(command=f"unitarity:{regime.name}", seed=seed, samples=samples)
    rng = rng_from(seed)
    worst = 0.0
    worst_conj = 0.0
    readings_differ = bool(regime.ties) and regime.kappa_domain == "imag"
    for _ in range(samples):
        while True:
            try:
                g = regime_gate(regime, rng)
                ghat, _ = unitarize(g)
                break
            except SingularityError:
                continue
        worst = max(worst, frobenius_norm(ghat.conj().T @ ghat - np.eye(g.shape[0])))
    if readings_differ:
        rng2 = rng_from(seed + 1)
        for _ in range(samples):
            try:
                g = regime_gate(regime, rng2, conjugate_reading=True)
                ghat, _ = unitarize(g)
            except SingularityError:
                continue
            worst_conj = max(worst_conj,
                             frobenius_norm(ghat.conj().T @ ghat - np.eye(g.shape[0])))
        rep.add(regime.name, worst, 1e-10, conjugate_reading_residual=worst_conj)
    else:
        rep.add(regime.name, worst, 1e-10)
    return rep


def trotter_limit_error(spec: CircuitSpec, n_steps: int, Q2, t_total: float) -> float:
    """|| M^n - exp(-i t Q2) || with the step set to -i t / (2 n).

    The circuit is rebuilt at the step matching n, so calling this with n
    and 2n probes the first-order product-formula error directly.
    """
    step = -1j * t_total / (2 * n_steps)
    chain = spec.chain.with_inhomogeneities(())
    chain = ChainSpec(chain.length, chain.local_dim, chain.boundary, (),
                      step, chain.twist)
    spec_n = CircuitSpec(chain, spec.model, spec.kl, spec.kr, spec.gate_normalization)
    M = floquet(spec_n, verify=False).M
    Mn = np.linalg.matrix_power(M, n_steps)
    target = mat_exp(-1j * t_total * np.asarray(Q2, dtype=complex))
    return frobenius_norm(Mn - target)
