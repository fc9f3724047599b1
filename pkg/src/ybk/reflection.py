"""Boundary reflection matrices: the full catalog of K families.

For each bulk model the package carries the published solutions of the
right boundary equation and the matching left (dual-equation) solutions:

====== ============================ ==========================================
model  right families               left families
====== ============================ ==========================================
xxx    f = k (x) ktilde             f = k^t(-u-1) (x) ktilde^t(u-1)
xxz    f                            f with shift i*gamma
xx     f and nf (8-vertex)          transpose at -u - pi/2
xxh    f (diagonal) and nf          transpose at -u - pi
xxh1   f (diagonal) and nf          printed closed forms (nf is singular at 0)
====== ============================ ==========================================

Families are addressed by string key, e.g. ``"xx/right/nf"``.  Entries are
held symbolically; evaluators, u-derivatives and Taylor data at u = 0 are
lambdified once per family and cached.  Boundary parameters are passed as
``{(i, j): value}`` maps using the row/column names of the published
matrices (for the xxx single-chain matrix, kappa_1, kappa_2, kappa_4 sit
at (1,1), (1,2), (2,1)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy as sp

from .errors import (
    LimitOrderingError, SingularityError, UnsupportedAutomorphismError, YbkError,
)
from .linalg import (
    dagger, embed_on_legs, frobenius_norm, kron, mat_inv, partial_trace,
    partial_transpose, permutation_op, proportionality_fit,
)
from .models import Model, ModelSpec, constants

__all__ = [
    "KMatrixFn", "KSpec", "k_single", "k_family", "catalog_keys", "tensor_k",
    "bybe_residual", "dual_bybe_residual", "automorphism_kl",
    "schmidt_rank", "abel_system", "AbelSystem", "abel_solution_dim",
    "transform_pair",
]

POLE_GUARD = 1e-6
_U = sp.Symbol("u")
_GAMMA = sp.Symbol("gamma")

# parameter slots of each family, in canonical order
_NF_XX = ((1, 1), (3, 3), (2, 3), (3, 2), (1, 4), (4, 1))
_NF_XXH = ((1, 4), (4, 1), (4, 4), (3, 3))
_F_6V = ((1, 1), (1, 2), (2, 1))
_F_DIAG = ((1, 1),)


def family_parameters(key: str) -> tuple:
    """Canonical (kappa keys, kappa_tilde keys) for a catalog entry."""
    model, side, kind = _parse_key(key)
    if kind == "nf":
        slots = _NF_XX if model is Model.XX else _NF_XXH
        return slots, ()
    if model in (Model.XXH, Model.XXH1):
        return _F_DIAG, _F_DIAG
    return _F_6V, _F_6V


def catalog_keys() -> list:
    keys = []
    for model in Model:
        kinds = ("f",) if model in (Model.XXX, Model.XXZ) else ("f", "nf")
        for side in ("right", "left"):
            for kind in kinds:
                keys.append(f"{model.value}/{side}/{kind}")
    return keys


def _parse_key(key: str):
    try:
        model, side, kind = key.split("/")
        model = Model(model)
    except (ValueError, KeyError) as exc:
        raise YbkError(f"unknown family key {key!r}") from exc
    if side not in ("right", "left") or kind not in ("f", "nf"):
        raise YbkError(f"unknown family key {key!r}")
    if kind == "nf" and model in (Model.XXX, Model.XXZ):
        raise YbkError(f"{model.value} admits only factorized boundaries")
    return model, side, kind


# ----------------------------------------------------------------------
# symbolic building blocks
# ----------------------------------------------------------------------

def _syms(prefix: str, slots) -> tuple:
    return tuple(sp.Symbol(f"{prefix}{i}{j}") for i, j in slots)


def _k_sym_single(model: Model, prefix: str):
    """Single-chain right k(u) of the model; (matrix, syms, denominators)."""
    u = _U
    if model is Model.XXX:
        k11, k12, k21 = _syms(prefix, _F_6V)
        den = 1 - k11 * u
        m = sp.Matrix([[(1 + k11 * u) / den, k12 * u / den], [k21 * u / den, 1]])
        return m, (k11, k12, k21), [("1 - kappa11*u", den)]
    if model in (Model.XXZ, Model.XX):
        k11, k12, k21 = _syms(prefix, _F_6V)
        den = 2 * sp.cos(u) - k11 * sp.sin(u)
        off = 2 * sp.sin(u) * sp.cos(u) / den
        m = sp.Matrix([
            [(k11 * sp.sin(u) + 2 * sp.cos(u)) / den, k12 * off],
            [k21 * off, 1],
        ])
        return m, (k11, k12, k21), [("2cos(u) - kappa11*sin(u)", den)]
    if model is Model.XXH:
        (k11,) = _syms(prefix, _F_DIAG)
        den = 1 - k11 * sp.tan(u / 2)
        m = sp.Matrix([[2 / den - 1, 0], [0, 1]])
        return m, (k11,), [("1 - kappa11*tan(u/2)", den), ("cos(u/2)", sp.cos(u / 2))]
    if model is Model.XXH1:
        (k11,) = _syms(prefix, _F_DIAG)
        den = 1 - u * k11
        m = sp.Matrix([[2 / den - 1, 0], [0, 1]])
        return m, (k11,), [("1 - kappa11*u", den)]
    raise YbkError(f"no single-chain k for {model}")


def _k_sym_xxh1_left_single(prefix: str):
    (k11,) = _syms(prefix, _F_DIAG)
    den = k11 * (2 * _U + 1) - 1
    m = sp.Matrix([[(k11 * (2 * _U - 1) + 1) / den, 0], [0, 1]])
    return m, (k11,), [("kappa11*(2u+1) - 1", den)]


def _nf_right_sym(model: Model):
    u = _U
    if model is Model.XX:
        k11, k33, k23, k32, k14, k41 = syms = _syms("k", _NF_XX)
        c = sp.cot(u)
        q = (k23 * k32 + k11 * (k33 - k11) - k14 * k41 - 2 * k33 * c + 4 * c**2) / (4 * c)
        m = sp.Matrix([
            [(k11 - k33 + 2 * c) / q - 1, 0, 0, k14 / q],
            [0, 1, k23 / q, 0],
            [0, k32 / q, k33 / q + 1, 0],
            [k41 / q, 0, 0, (2 * c - k11) / q - 1],
        ])
        return m, syms, [("q(u)", q), ("sin(u)", sp.sin(u))]
    if model is Model.XXH:
        k14, k41, k44, k33 = syms = _syms("k", _NF_XXH)
        c = sp.cot(u / 2)
        g = (-(k44**2) - k14 * k41 + k33 * (k44 - c) + c**2) / (2 * c)
        m = sp.Matrix([
            [(c - k44) / g - 1, 0, 0, k14 / g],
            [0, 1, 0, 0],
            [0, 0, k33 / g + 1, 0],
            [k41 / g, 0, 0, (k44 - k33 + c) / g - 1],
        ])
        return m, syms, [("g(u)", g), ("sin(u/2)", sp.sin(u / 2))]
    if model is Model.XXH1:
        k14, k41, k44, k33 = syms = _syms("k", _NF_XXH)
        mm = -(u**2 * k44**2 + u**2 * k14 * k41 + u * k33 * (2 - u * k44) - 4) / (4 * u)
        m = sp.Matrix([
            [(2 / u - k44) / mm - 1, 0, 0, k14 / mm],
            [0, 1, 0, 0],
            [0, 0, k33 / mm + 1, 0],
            # sign of the 2/u term fixed by the reflection equation itself;
            # see tests for the numerical certificate
            [k41 / mm, 0, 0, (k44 - k33 + 2 / u) / mm - 1],
        ])
        return m, syms, [("m(u)", mm), ("u", u)]
    raise YbkError(f"no non-factorized family for {model.value}")


def _xxh1_left_nf_sym():
    k14, k41, k44, k33 = syms = _syms("k", _NF_XXH)
    u = _U

    def h(x):
        return x**2 * k44**2 + x**2 * k14 * k41 - x * k33 * (x * k44 + 4) - 16

    den = h(1 - 2 * u)
    z = (1 - 16 * u**2) * den / (64 * u**2 * (6 * (u * k33 + 2) + h(u)))
    # corner numerators fixed against the no-crossing automorphism output,
    # which this closed form reproduces entrywise; see the test suite
    m = z * sp.Matrix([
        [(16 * (1 - u * k44) + h(-2 * u) - h(1)) / den, 0, 0, 16 * u * k14 / den],
        [0, 1, 0, 0],
        [0, 0, h(2 * u + 1) / den, 0],
        [16 * u * k41 / den, 0, 0, (16 * (1 + u * k44) + h(2 * u) - h(1)) / den],
    ])
    dens = [("h(1-2u)", den), ("u", u), ("6(u*kappa33+2)+h(u)", 6 * (u * k33 + 2) + h(u))]
    return m, syms, dens


@lru_cache(maxsize=None)
def _family_symbolic(model: Model, side: str, kind: str):
    """(matrix, kappa syms, tilde syms, extra syms, denominators, regular, analytic0).

    ``regular`` means K(0) = 1 (right families); ``analytic0`` means the
    entries have a Taylor series at u = 0 (everything except the published
    xxh1 left non-factorized form, which has a pole there).
    """
    extra = ()
    if kind == "nf":
        if side == "right" or model in (Model.XX, Model.XXH):
            m, syms, dens = _nf_right_sym(model)
            if side == "left":
                shift = -sp.pi / 2 if model is Model.XX else -sp.pi
                m = m.subs(_U, -_U + shift).T
                dens = [(n, d.subs(_U, -_U + shift)) for n, d in dens]
            return m, syms, (), extra, tuple(dens), side == "right", True
        # xxh1 left nf: published closed form, singular at u = 0
        m, syms, dens = _xxh1_left_nf_sym()
        return m, syms, (), extra, tuple(dens), False, False
    # factorized families
    if side == "right" or model in (Model.XX, Model.XXH):
        k, ks, kd = _k_sym_single(model, "k")
        kt, kts, ktd = _k_sym_single(model, "kt")
        m = sp.Matrix(np.kron(np.array(k.subs(_U, _U)), np.array(kt.subs(_U, -_U))))
        dens = kd + [(n, d.subs(_U, -_U)) for n, d in ktd]
        if side == "left":
            shift = -sp.pi / 2 if model is Model.XX else -sp.pi
            m = m.subs(_U, -_U + shift).T
            dens = [(n, d.subs(_U, -_U + shift)) for n, d in dens]
        return m, ks, kts, extra, tuple(dens), side == "right", True
    # left factorized closed forms for xxx / xxz / xxh1
    if model is Model.XXX:
        k, ks, kd = _k_sym_single(model, "k")
        kt, kts, ktd = _k_sym_single(model, "kt")
        m = sp.Matrix(np.kron(np.array(k.T.subs(_U, -_U - 1)), np.array(kt.T.subs(_U, _U - 1))))
        dens = [(n, d.subs(_U, -_U - 1)) for n, d in kd]
        dens += [(n, d.subs(_U, _U - 1)) for n, d in ktd]
        return m, ks, kts, extra, tuple(dens), False, True
    if model is Model.XXZ:
        k, ks, kd = _k_sym_single(model, "k")
        kt, kts, ktd = _k_sym_single(model, "kt")
        sh = sp.I * _GAMMA
        m = sp.Matrix(np.kron(np.array(k.T.subs(_U, -_U + sh)), np.array(kt.T.subs(_U, _U + sh))))
        dens = [(n, d.subs(_U, -_U + sh)) for n, d in kd]
        dens += [(n, d.subs(_U, _U + sh)) for n, d in ktd]
        return m, ks, kts, (_GAMMA,), tuple(dens), False, True
    if model is Model.XXH1:
        k, ks, kd = _k_sym_xxh1_left_single("k")
        kt, kts, ktd = _k_sym_xxh1_left_single("kt")
        m = sp.Matrix(np.kron(np.array(k), np.array(kt.subs(_U, -_U))))
        dens = kd + [(n, d.subs(_U, -_U)) for n, d in ktd]
        return m, ks, kts, extra, tuple(dens), False, True
    raise YbkError(f"no left factorized family for {model.value}")


@lru_cache(maxsize=None)
def _family_lambdas(model: Model, side: str, kind: str, order: int):
    m, ks, kts, extra, dens, _, _ = _family_symbolic(model, side, kind)
    d = sp.diff(m, _U, order) if order else m
    args = (_U, *ks, *kts, *extra)
    fn = sp.lambdify(args, d, modules="numpy")
    den_fns = tuple((n, sp.lambdify(args, e, modules="numpy")) for n, e in dens)
    return fn, den_fns


@lru_cache(maxsize=None)
def _family_taylor(model: Model, side: str, kind: str):
    """Lambdified Taylor coefficient matrices of K(u) at u = 0, orders 0..3."""
    m, ks, kts, extra, _, _, analytic0 = _family_symbolic(model, side, kind)
    if not analytic0:
        raise LimitOrderingError("family singular at u = 0")
    args = (*ks, *kts, *extra)
    series = []
    for i in range(m.rows):
        row = []
        for j in range(m.cols):
            s = sp.series(m[i, j], _U, 0, 4).removeO()
            if s.has(sp.zoo):
                raise LimitOrderingError("family singular at u = 0")
            row.append(s)
        series.append(row)
    coeffs = []
    for order in range(4):
        rows = [[sp.factorial(order) * series[i][j].coeff(_U, order)
                 for j in range(m.cols)] for i in range(m.rows)]
        coeffs.append(sp.lambdify(args, sp.Matrix(rows), modules="numpy"))
    return tuple(coeffs)


def _taylor_by_contour(eval_fn, order: int, radius: float = 0.05, n: int = 64):
    """d^order K / du^order at 0 via a Cauchy contour integral.

    Spectrally accurate for functions analytic inside the contour; used as
    the fallback where the symbolic series coefficients hit removable
    parameter-slice singularities (e.g. the all-zero boundary draw).
    """
    thetas = 2 * np.pi * np.arange(n) / n
    acc = None
    for th in thetas:
        z = radius * np.exp(1j * th)
        val = eval_fn(z) * np.exp(-1j * order * th)
        acc = val if acc is None else acc + val
    coeff = acc / (n * radius ** order)
    return math.factorial(order) * coeff


@dataclass
class KSpec:
    """Which boundary family, with its parameter draw."""

    model: ModelSpec
    side: str
    kind: str
    kappa: dict = field(default_factory=dict)
    kappa_tilde: dict = field(default_factory=dict)

    @property
    def key(self) -> str:
        return f"{self.model.model.value}/{self.side}/{'nf' if self.kind.startswith('n') else 'f'}"


@dataclass
class KMatrixFn:
    """A concrete boundary matrix: spectral parameter -> matrix."""

    label: str
    side: str
    kind: str
    dim: int
    regular: bool
    model: ModelSpec
    _eval: callable
    _taylor: callable | None
    params: dict = field(default_factory=dict)

    def __call__(self, u: complex) -> np.ndarray:
        return self._eval(u, 0)

    def evaluator(self, u: complex) -> np.ndarray:
        return self._eval(u, 0)

    def derivative(self, u: complex, order: int) -> np.ndarray:
        return self._eval(u, order)

    def taylor0(self, order: int) -> np.ndarray:
        """d^order K / du^order at u = 0 (exact series data)."""
        if self._taylor is None:
            raise LimitOrderingError(
                f"{self.label} is singular at u = 0; differentiate the assembled "
                "product instead of this factor"
            )
        return self._taylor(order)

    def singularities(self, re_box=(-1.5, 1.5), im_box=(-0.8, 0.8), grid: int = 48) -> list:
        """Denominator zeros inside a box: coarse scan plus Newton polish."""
        return _den_roots(self, re_box, im_box, grid)


def _make_kfn(label, model_spec, side, kind, kappa, kappa_tilde) -> KMatrixFn:
    model = model_spec.model
    _, ks, kts, extra, _, regular, analytic0 = _family_symbolic(model, side, kind)
    slots_k, slots_t = family_parameters(f"{model.value}/{side}/{'nf' if kind == 'nf' else 'f'}")
    kappa = dict(kappa or {})
    kappa_tilde = dict(kappa_tilde or {})
    for slots, given, name in ((slots_k, kappa, "kappa"), (slots_t, kappa_tilde, "kappa_tilde")):
        unknown = set(given) - set(slots)
        if unknown:
            raise YbkError(f"{label}: unknown {name} entries {sorted(unknown)}")
    vals_k = tuple(complex(kappa.get(s, 0.0)) for s in slots_k)
    vals_t = tuple(complex(kappa_tilde.get(s, 0.0)) for s in slots_t)
    vals_extra = model_spec._args() if extra else ()
    allvals = vals_k + vals_t + vals_extra

    def evaluate(u, order):
        fn, den_fns = _family_lambdas(model, side, kind, order)
        u = complex(u)
        if analytic0 and abs(u) < 1e-5:
            # exact series data through the removable 0/0 at the origin
            out = np.zeros_like(taylor(0))
            for k in range(order, 4):
                out += taylor(k) * u ** (k - order) / math.factorial(k - order)
            return out
        for name, dfn in den_fns:
            if abs(complex(dfn(u, *allvals))) < POLE_GUARD:
                raise SingularityError(f"{label}: {name}", u)
        m = np.asarray(fn(u, *allvals), dtype=complex)
        if not np.all(np.isfinite(m)):
            raise SingularityError(label, u)
        return m

    taylor = None
    if analytic0:
        memo = {}

        def taylor(order, _vals=allvals, _memo=memo):
            # all four orders must come from one source: on degenerate
            # parameter slices (e.g. the all-zero draw) the u->0 and
            # kappa->0 limits do not commute, and the symbolic generic-
            # kappa series disagrees with the actual slice function
            if not _memo:
                tay = _family_taylor(model, side, kind)
                try:
                    cand = [np.asarray(tay[k](*_vals), dtype=complex) for k in range(4)]
                    ok = all(np.all(np.isfinite(c)) for c in cand)
                except ZeroDivisionError:
                    ok = False
                if not ok:
                    def direct(z):
                        fn, _ = _family_lambdas(model, side, kind, 0)
                        return np.asarray(fn(z, *_vals), dtype=complex)
                    cand = [_taylor_by_contour(direct, k) for k in range(4)]
                _memo.update(enumerate(cand))
            return _memo[order]

    probe_fn, _ = _family_lambdas(model, side, kind, 0)
    dim = int(np.asarray(probe_fn(0.3, *allvals)).shape[0])
    return KMatrixFn(label, side, kind, dim, regular, model_spec, evaluate, taylor,
                     {"kappa": kappa, "kappa_tilde": kappa_tilde})


def k_family(key: str, model_spec: ModelSpec | None = None,
             kappa: dict | None = None, kappa_tilde: dict | None = None) -> KMatrixFn:
    """Look up a catalog family, e.g. ``k_family("xx/right/nf", kappa={...})``."""
    model, side, kind = _parse_key(key)
    if model_spec is None:
        if model is Model.XXZ:
            raise YbkError("xxz families need a ModelSpec carrying gamma")
        if model is Model.XXH:
            raise YbkError("xxh families need a ModelSpec carrying psi")
        model_spec = ModelSpec(model)
    elif model_spec.model is not model:
        raise YbkError(f"key {key} does not match model {model_spec.model.value}")
    return _make_kfn(key, model_spec, side, kind, kappa, kappa_tilde)


def k_single(model_spec: ModelSpec, kappa: dict | None = None, u: complex | None = None):
    """The single-chain right k-matrix; returns the 2x2 value when u is given.

    Parameter slots: (1,1), (1,2), (2,1) for xxx/xxz/xx (the published
    kappa_1, kappa_2, kappa_4 for xxx), (1,1) for the diagonal xxh/xxh1
    solutions.
    """
    model = model_spec.model
    k, syms, dens = _k_sym_single(model, "k")
    slots = _F_DIAG if model in (Model.XXH, Model.XXH1) else _F_6V
    kappa = dict(kappa or {})
    unknown = set(kappa) - set(slots)
    if unknown:
        raise YbkError(f"unknown single-chain kappa entries {sorted(unknown)}")
    vals = tuple(complex(kappa.get(s, 0.0)) for s in slots)

    fns = _single_lambdas(model)

    def evaluate(x, order):
        x = complex(x)
        fn, den_fns, tay = fns[order], fns["dens"], fns["taylor"]
        if abs(x) < 1e-5:
            out = np.zeros((2, 2), dtype=complex)
            for kk in range(order, 4):
                out += np.asarray(tay[kk](*vals), dtype=complex) * x ** (kk - order) / math.factorial(kk - order)
            return out
        for name, dfn in den_fns:
            if abs(complex(dfn(x, *vals))) < POLE_GUARD:
                raise SingularityError(f"single k: {name}", x)
        m = np.asarray(fn(x, *vals), dtype=complex)
        if not np.all(np.isfinite(m)):
            raise SingularityError("single k", x)
        return m

    fn_obj = KMatrixFn(f"{model.value}/right/k", "right", "f", 2, True, model_spec,
                       evaluate, lambda order: np.asarray(fns["taylor"][order](*vals), dtype=complex),
                       {"kappa": kappa})
    if u is not None:
        return fn_obj(u)
    return fn_obj


@lru_cache(maxsize=None)
def _single_lambdas(model: Model):
    k, syms, dens = _k_sym_single(model, "k")
    out = {}
    for order in range(4):
        d = sp.diff(k, _U, order) if order else k
        out[order] = sp.lambdify((_U, *syms), d, modules="numpy")
    out["dens"] = tuple((n, sp.lambdify((_U, *syms), e, modules="numpy")) for n, e in dens)
    taylor = []
    for order in range(4):
        rows = [[sp.factorial(order) * sp.series(k[i, j], _U, 0, 4).removeO().coeff(_U, order)
                 for j in range(2)] for i in range(2)]
        taylor.append(sp.lambdify(syms, sp.Matrix(rows), modules="numpy"))
    out["taylor"] = tuple(taylor)
    return out


def tensor_k(k1, k2, label="tensor") -> callable:
    """Doubled boundary matrix k1(u) (x) k2(-u) from two single-chain solutions."""
    def K(u):
        return kron(k1(u), k2(-u))
    return K


def _den_roots(kfn: KMatrixFn, re_box, im_box, grid) -> list:
    _, den_fns = _family_lambdas(kfn.model.model, kfn.side, "nf" if kfn.kind == "nf" else "f", 0)
    vals = None
    roots = []
    xs = np.linspace(re_box[0], re_box[1], grid)
    ys = np.linspace(im_box[0], im_box[1], grid)
    for name, dfn in den_fns:
        def f(z):
            try:
                return complex(dfn(z, *_kfn_vals(kfn)))
            except Exception:
                return complex("nan")
        for x in xs:
            for y in ys:
                z = complex(x, y)
                v = f(z)
                if not np.isfinite(v) or abs(v) > 0.25:
                    continue
                # complex Newton with numerical derivative
                for _ in range(40):
                    h = 1e-6
                    dv = (f(z + h) - f(z - h)) / (2 * h)
                    if abs(dv) < 1e-14:
                        break
                    step = f(z) / dv
                    z = z - step
                    if abs(step) < 1e-12:
                        break
                if abs(f(z)) < 1e-9 and all(abs(z - r) > 1e-6 for r in roots):
                    if re_box[0] - 0.1 <= z.real <= re_box[1] + 0.1 and im_box[0] - 0.1 <= z.imag <= im_box[1] + 0.1:
                        roots.append(z)
    return sorted(roots, key=lambda z: (round(z.real, 9), round(z.imag, 9)))


def _kfn_vals(kfn: KMatrixFn) -> tuple:
    model = kfn.model.model
    slots_k, slots_t = family_parameters(
        f"{model.value}/{kfn.side}/{'nf' if kfn.kind == 'nf' else 'f'}")
    vals_k = tuple(complex(kfn.params["kappa"].get(s, 0.0)) for s in slots_k)
    vals_t = tuple(complex(kfn.params.get("kappa_tilde", {}).get(s, 0.0)) for s in slots_t)
    extra = kfn.model._args() if (model is Model.XXZ and kfn.side == "left") else ()
    return vals_k + vals_t + extra


# ----------------------------------------------------------------------
# the boundary Yang-Baxter equations
# ----------------------------------------------------------------------

def _two_site(R, d, u):
    return R(u)


def _swap12(m, d):
    P = permutation_op(d)
    return P @ m @ P


def bybe_residual(R, K, u: complex, v: complex) -> float:
    """Right reflection equation residual for K on the gate R.

    || R12(u-v) K1(u) R21(u+v) K2(v) - K2(v) R12(u+v) K1(u) R21(u-v) ||
    """
    Ku, Kv = K(u), K(v)
    d = Ku.shape[0]
    eye = np.eye(d, dtype=complex)
    K1, K2 = kron(Ku, eye), kron(eye, Kv)
    lhs = _two_site(R, d, u - v) @ K1 @ _swap12(R(u + v), d) @ K2
    rhs = K2 @ R(u + v) @ K1 @ _swap12(R(u - v), d)
    return frobenius_norm(lhs - rhs)


def _mid_crossing(R, d, u, v, eta):
    return _swap12(R(-u - v - 2 * eta), d)


def _mid_no_crossing(R, d, u, v):
    m = partial_transpose(_swap12(R(u + v), d), (d, d), 1)
    return partial_transpose(mat_inv(m), (d, d), 1)


def dual_bybe_residual(R, KL, eta, u: complex, v: complex) -> float:
    """Dual (left) reflection equation residual.

    With ``eta`` given this is the crossing-unitarity form; with
    ``eta=None`` the inverse-partial-transpose form for gates without
    crossing unitarity.
    """
    Ku, Kv = KL(u), KL(v)
    d = Ku.shape[0]
    eye = np.eye(d, dtype=complex)
    K1t = kron(Ku.T, eye)
    K2t = kron(eye, Kv.T)
    mid = _mid_crossing(R, d, u, v, eta) if eta is not None else _mid_no_crossing(R, d, u, v)
    outer = R(-u + v)
    lhs = outer @ K1t @ mid @ K2t
    rhs = K2t @ mid @ K1t @ outer
    return frobenius_norm(lhs - rhs)


def dual_variant(model_spec: ModelSpec, dim: int):
    """eta for the dual equation (None selects the no-crossing variant)."""
    cons = constants(model_spec)
    if dim == 2:
        return cons.eta_single if cons.crossing_single else None
    return cons.eta_doubled if cons.crossing_doubled else None


def automorphism_kl(which: str, kr, model_spec: ModelSpec, u: complex,
                    dim: int | None = None) -> np.ndarray:
    """Map a right solution to a left one.

    ``which`` is one of ``transposeShift``, ``inverseTransposeShift``,
    ``traceContraction`` (requiring crossing unitarity) or ``noCrossing``
    (always available).  ``kr`` is any callable u -> matrix.
    """
    probe = kr(u)
    d = probe.shape[0]
    if dim is not None and dim != d:
        raise YbkError("dim does not match the K matrix")
    from .models import provider_for
    R = provider_for(model_spec, d)
    cons = constants(model_spec)
    crossing = cons.crossing_single if d == 2 else cons.crossing_doubled
    eta = cons.eta_single if d == 2 else cons.eta_doubled
    if which in ("transposeShift", "inverseTransposeShift", "traceContraction") and not crossing:
        raise UnsupportedAutomorphismError(
            f"{which} needs crossing unitarity, absent for {model_spec.model.value} at dim {d}"
        )
    if which == "transposeShift":
        return kr(-u - eta).T
    if which == "inverseTransposeShift":
        return mat_inv(kr(u + eta)).T
    eye = np.eye(d, dtype=complex)
    P = permutation_op(d)
    if which == "traceContraction":
        mid = R(-2 * u - 2 * eta)
    elif which == "noCrossing":
        m = partial_transpose(R(2 * u), (d, d), 1)
        mid = partial_transpose(mat_inv(m), (d, d), 1)
    else:
        raise YbkError(f"unknown automorphism {which!r}")
    return partial_trace(P @ mid @ kron(eye, kr(u)), (d, d), 1)


# ----------------------------------------------------------------------
# factorizability
# ----------------------------------------------------------------------

def schmidt_rank(K, tol: float = 1e-10):
    """Rank of the realignment of a 4x4 doubled-boundary matrix.

    Rank 1 means K = k (x) ktilde; the factors are then returned (fixed up
    to a reciprocal scale), else None.
    """
    K = np.asarray(K, dtype=complex)
    if K.shape != (4, 4):
        raise YbkError("schmidt_rank expects a 4x4 matrix")
    R = K.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    U, s, Vh = np.linalg.svd(R)
    if s[0] < 1e-300:
        return 0, None
    rank = int(np.sum(s > tol * s[0]))
    factors = None
    if rank == 1:
        k = (U[:, 0] * np.sqrt(s[0])).reshape(2, 2)
        kt = (Vh[0, :] * np.sqrt(s[0])).reshape(2, 2)
        factors = (k, kt)
    return rank, factors


# ----------------------------------------------------------------------
# the differentiated (Abel) reflection equation
# ----------------------------------------------------------------------

def _bybe_lhs_minus_rhs(R, K1_of_u, K2_value, u, v):
    d = K2_value.shape[0]
    eye = np.eye(d, dtype=complex)
    K1 = kron(K1_of_u(u), eye)
    K2 = kron(eye, K2_value)
    return (R(u - v) @ K1 @ _swap12(R(u + v), d) @ K2
            - K2 @ R(u + v) @ K1 @ _swap12(R(u - v), d))


def _abel_derivative(R, K1_of_u, K2_value, v, delta=1e-4):
    """d/du of the reflection equation at u = 0, Richardson-extrapolated."""
    def central(h):
        return (_bybe_lhs_minus_rhs(R, K1_of_u, K2_value, h, v)
                - _bybe_lhs_minus_rhs(R, K1_of_u, K2_value, -h, v)) / (2 * h)

    d1 = central(delta)
    d2 = central(delta / 2)
    return (4 * d2 - d1) / 3


@dataclass
class AbelSystem:
    """Stacked linearization of the differentiated reflection equation.

    Unknowns, in column order: vec(K(v_1) - 1), ..., vec(K(v_s) - 1),
    vec(kappa).  The kernel of :attr:`matrix` restricted to the kappa block
    bounds the dimension of the family of regular solutions through the
    identity.
    """

    matrix: np.ndarray
    v_samples: tuple
    local_dim: int
    R: object

    def substitution_residual(self, K_fn) -> float:
        """Plug an exact family into the differentiated equation.

        ``K_fn`` must be callable at spectral points near 0 and at each
        sampled v; for a true solution the residual is pure roundoff.
        """
        worst = 0.0
        for v in self.v_samples:
            G = _abel_derivative(self.R, K_fn, K_fn(v), v)
            worst = max(worst, frobenius_norm(G))
        return worst

    def taylor_substitution_residual(self, K_fn, kappa_matrix) -> float:
        """Plug (K(v) from the family, K'(0) = kappa) into the system."""
        worst = 0.0
        for v in self.v_samples:
            lin = lambda x: np.eye(kappa_matrix.shape[0], dtype=complex) + x * kappa_matrix
            G = _abel_derivative(self.R, lin, K_fn(v), v)
            worst = max(worst, frobenius_norm(G))
        return worst


def abel_system(R, local_dim: int, v_samples) -> AbelSystem:
    """Assemble the linearized system at the identity solution.

    Columns are the directional derivatives of the differentiated
    reflection equation along unit perturbations of K(v) and of
    kappa = K'(0); both blocks are built by the same Richardson stencil.
    """
    d = int(local_dim)
    n = d * d
    eye = np.eye(d, dtype=complex)
    v_samples = tuple(complex(v) for v in v_samples)
    s = len(v_samples)
    rows = n * n
    A = np.zeros((rows * s, n * s + n), dtype=complex)
    ident = lambda x: eye
    for si, v in enumerate(v_samples):
        # K(v) block
        for a in range(d):
            for b in range(d):
                E = np.zeros((d, d), dtype=complex)
                E[a, b] = 1.0
                G = _abel_derivative(R, ident, eye + E, v)
                A[si * rows:(si + 1) * rows, si * n + a * d + b] = G.ravel()
        # kappa block
        for a in range(d):
            for b in range(d):
                E = np.zeros((d, d), dtype=complex)
                E[a, b] = 1.0
                lin = lambda x, _E=E: eye + x * _E
                G = _abel_derivative(R, lin, eye, v)
                A[si * rows:(si + 1) * rows, n * s + a * d + b] = G.ravel()
    return AbelSystem(A, v_samples, d, R)


def abel_solution_dim(system: AbelSystem, threshold: float = 1e-8):
    """Kappa-block dimension of the numerical kernel.

    Returns (dimension, singular values of the stacked system) so border
    cases stay visible.
    """
    A = system.matrix
    U, s, Vh = np.linalg.svd(A)
    smax = s[0] if len(s) else 0.0
    ncols = A.shape[1]
    null_mask = np.ones(ncols, dtype=bool)
    null_mask[: len(s)] = s < threshold * smax
    null_basis = Vh.conj().T[:, null_mask[: Vh.shape[0]]] if smax > 0 else np.eye(ncols)
    # also count columns beyond the rank (if matrix is wider than tall)
    if ncols > len(s):
        extra = Vh.conj().T[:, len(s):]
        null_basis = np.hstack([null_basis, extra]) if null_basis.size else extra
    n = system.local_dim ** 2
    kappa_block = null_basis[-n:, :]
    if kappa_block.size == 0:
        return 0, s
    sk = np.linalg.svd(kappa_block, compute_uv=False)
    dim = int(np.sum(sk > threshold * max(sk[0], 1e-300)))
    return dim, s


# ----------------------------------------------------------------------
# solution-preserving transformations
# ----------------------------------------------------------------------

def transform_pair(R, K, transform, rng=None):
    """Apply a solution-preserving transformation to a gate/boundary pair.

    ``transform`` is one of::

        ("basis", A)           R -> (A (x) A) R (A (x) A)^-1,  K -> A^-1 K A
        ("twist", A)           R -> (1 (x) A) R (A^-1 (x) 1),  K -> A^-1 K A
        ("normalize", f, g)    R -> f(u) R,  K -> g(u) K
        ("reparametrize", c)   u -> c u

    Twists require [R(u), A (x) A] = 0, checked at three sample points.
    """
    kind = transform[0]
    if kind in ("basis", "twist"):
        A = np.asarray(transform[1], dtype=complex)
        Ainv = mat_inv(A)
        if kind == "twist":
            pts = (0.17 + 0.05j, -0.23 + 0.11j, 0.31 - 0.07j)
            AA = kron(A, A)
            for x in pts:
                from .errors import TwistError
                if frobenius_norm(R(x) @ AA - AA @ R(x)) > 1e-9 * max(1.0, frobenius_norm(R(x))):
                    raise TwistError("twist matrix does not commute with the gate")
            newR = lambda u: kron(np.eye(A.shape[0], dtype=complex), A) @ R(u) @ kron(Ainv, np.eye(A.shape[0], dtype=complex))
        else:
            AA = kron(A, A)
            AAinv = kron(Ainv, Ainv)
            newR = lambda u: AA @ R(u) @ AAinv
        newK = lambda u: Ainv @ K(u) @ A
        return newR, newK
    if kind == "normalize":
        f, g = transform[1], transform[2]
        fs = f if callable(f) else (lambda u, _c=f: _c)
        gs = g if callable(g) else (lambda u, _c=g: _c)
        return (lambda u: fs(u) * R(u)), (lambda u: gs(u) * K(u))
    if kind == "reparametrize":
        c = complex(transform[1])  # h(u) = c*u is the additive reparametrization
        return (lambda u: R(c * u)), (lambda u: K(c * u))
    raise YbkError(f"unknown transformation {kind!r}")
