"""Seeded draws of spectral points and boundary parameters.

All randomness in the package flows through a ``numpy.random.Generator``
created from an explicit seed, so every sweep is reproducible.  Spectral
points are drawn from a bounded complex box and rejected while any
quantity the caller needs is singular or badly conditioned.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import SingularityError, YbkError

# Default sampling box: safely inside the analyticity region of all five
# gate families for O(1) boundary parameters.
RE_BOX = (-1.1, 1.1)
IM_BOX = (-0.55, 0.55)


def rng_from(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed))


def complex_point(rng, re=RE_BOX, im=IM_BOX) -> complex:
    return complex(rng.uniform(*re), rng.uniform(*im))


def spectral_points(rng, n, validator=None, max_tries=200, re=RE_BOX, im=IM_BOX):
    """Draw ``n`` points, rejecting any where ``validator`` raises.

    The validator should evaluate everything the caller is about to build
    (gates, K matrices, shifted arguments) and let :class:`SingularityError`
    propagate for bad draws.
    """
    out = []
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > max_tries * n:
            raise YbkError("rejection sampling failed to find nonsingular points")
        u = complex_point(rng, re, im)
        if validator is not None:
            try:
                validator(u)
            except SingularityError:
                continue
        out.append(u)
    return out


def spectral_pairs(rng, n, validator=None, max_tries=200, re=RE_BOX, im=IM_BOX):
    """Draw ``n`` pairs (u, v); the validator receives both points."""
    out = []
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > max_tries * n:
            raise YbkError("rejection sampling failed to find nonsingular pairs")
        u = complex_point(rng, re, im)
        v = complex_point(rng, re, im)
        if validator is not None:
            try:
                validator(u, v)
            except SingularityError:
                continue
        out.append((u, v))
    return out


def kappa_draw(rng, keys, domain="complex", scale=1.0) -> dict:
    """Random boundary-parameter map over the given index pairs."""
    out = {}
    for key in keys:
        x = rng.uniform(-scale, scale)
        y = rng.uniform(-scale, scale)
        if domain == "real":
            out[key] = complex(x)
        elif domain == "imag":
            out[key] = 1j * x
        elif domain == "complex":
            out[key] = complex(x, y)
        else:
            raise ValueError(f"unknown parameter domain {domain!r}")
    return out


def thread_count() -> int:
    """Worker cap for internal sweeps, from the YBK_THREADS environment variable."""
    try:
        return max(1, int(os.environ.get("YBK_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Map over items, threaded when YBK_THREADS > 1 (BLAS releases the GIL)."""
    workers = thread_count()
    items = list(items)
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
