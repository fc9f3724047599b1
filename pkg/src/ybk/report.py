"""Residual reports: the package's single unit of verification output.

A report is a flat list of named checks.  Each check stores the measured
residual, the tolerance it was held to and a pass flag, plus free-form
metadata (fitted scalars, parameter draws, pole distances).  Reports render
to a deterministic line-oriented text format, version tag ``ybk-report/1``;
the only non-reproducible byte is the ``generated:`` header line, which
consumers are expected to strip before diffing.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

REPORT_VERSION = "ybk-report/1"


def _jsonable(value):
    """Coerce numpy scalars / complex numbers into JSON-friendly values."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, complex):
        return {"re": float(value.real), "im": float(value.imag)}
    if hasattr(value, "item"):  # numpy scalar
        return _jsonable(value.item())
    return value


@dataclass
class Check:
    name: str
    residual: float
    tolerance: float
    passed: bool
    metadata: dict = field(default_factory=dict)

    def render(self) -> str:
        meta = json.dumps(_jsonable(self.metadata), sort_keys=True, separators=(",", ":"))
        status = "pass" if self.passed else "FAIL"
        return (
            f"check {self.name} residual={self.residual:.6e} "
            f"tol={self.tolerance:.1e} {status} meta={meta}"
        )


@dataclass
class ResidualReport:
    command: str
    seed: int
    samples: int
    checks: list[Check] = field(default_factory=list)
    version: str = REPORT_VERSION

    def add(self, name, residual, tolerance, passed=None, **metadata) -> Check:
        residual = float(residual)
        if passed is None:
            passed = residual < tolerance
        check = Check(name, residual, float(tolerance), bool(passed), metadata)
        self.checks.append(check)
        return check

    def extend(self, other: "ResidualReport", prefix: str = "") -> None:
        for c in other.checks:
            self.checks.append(
                Check(prefix + c.name, c.residual, c.tolerance, c.passed, c.metadata)
            )

    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def render(self, timestamp: bool = True) -> str:
        lines = [
            self.version,
            f"command: {self.command}",
            f"seed: {self.seed}",
            f"samples: {self.samples}",
        ]
        if timestamp:
            lines.append(f"generated: {time.strftime('%Y-%m-%dT%H:%M:%S%z')}")
        lines.extend(c.render() for c in self.checks)
        n_fail = len(self.failures)
        lines.append(f"summary passed={len(self.checks) - n_fail} failed={n_fail}")
        return "\n".join(lines) + "\n"
