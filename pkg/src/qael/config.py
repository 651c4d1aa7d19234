"""Numerical tolerances shared by every stage of the pipeline."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

from .errors import ModelError

ENV_VAR = "QAEL_TOL_OVERRIDES"


@dataclass(frozen=True)
class Tolerances:
    # relative to the Frobenius norm of the operator being tested
    herm: float = 1e-9
    trace: float = 1e-9
    psd: float = 1e-9
    rel_tol_pinv: float = 1e-10
    # zero eigenvalues: |lambda| <= zero * max(1, ||L0||_F)
    zero: float = 1e-9
    support: float = 1e-9
    # Choi eigenvalues kept above cut * lambda_max
    cut: float = 1e-10
    # relative spread under which Choi eigenvalues count as degenerate
    cluster: float = 1e-8
    jump_drop: float = 1e-12
    consolidate: float = 1e-10

    def replace(self, **overrides) -> "Tolerances":
        return dataclasses.replace(self, **overrides)

    def with_overrides(self, overrides: dict | None) -> "Tolerances":
        """Apply a mapping of overrides; unknown keys and non-positive values are errors."""
        if not overrides:
            return self
        known = {f.name for f in dataclasses.fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ModelError(f"unknown tolerance keys: {sorted(unknown)}")
        values = {}
        for k, v in overrides.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ModelError(f"tolerance {k} must be a positive number, got {v!r}")
            values[k] = float(v)
        return dataclasses.replace(self, **values)

    @classmethod
    def from_env(cls, environ=None) -> "Tolerances":
        environ = os.environ if environ is None else environ
        raw = environ.get(ENV_VAR)
        if not raw:
            return cls()
        try:
            overrides = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{ENV_VAR} is not valid JSON: {exc}") from exc
        if not isinstance(overrides, dict):
            raise ModelError(f"{ENV_VAR} must be a JSON object")
        return cls().with_overrides(overrides)


DEFAULT = Tolerances()
