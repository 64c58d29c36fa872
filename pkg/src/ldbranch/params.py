"""Model parameters, scenario configuration, and validation.

The model has three populations: a subcritical drug-sensitive population
started at n, supercritical resistant mutants that pre-exist treatment
(started at X), and resistant clones created during treatment by mutation
at per-capita rate mu * n**(-alpha) of the sensitive population.

All parameter containers are plain immutable dataclasses; nothing is
checked at construction time.  ``validate`` is the single gate that
enforces every invariant and reports all violations at once, so that
deliberately degenerate parameter sets (e.g. a frozen sensitive
population for simulator sanity checks) can still be built.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import Union

__all__ = [
    "SensitiveRates",
    "ResistantRates",
    "MutationLaw",
    "SubThreshold",
    "Critical",
    "PreExisting",
    "Regime",
    "ModelParams",
    "ScenarioConfig",
    "InvalidConfiguration",
    "ConfigError",
    "validate",
    "time_scale",
    "CONFIG_KEYS",
    "DEFAULT_SETTINGS",
    "ENV_PREFIX",
    "load_config",
    "apply_env_overrides",
    "apply_cli_overrides",
    "build_from_settings",
]


@dataclass(frozen=True)
class SensitiveRates:
    """Birth/death rates of the drug-sensitive population (subcritical)."""

    r0: float
    d0: float

    @property
    def lambda0(self) -> float:
        return self.r0 - self.d0

    @property
    def r(self) -> float:
        """Decay rate r = -lambda0 = d0 - r0."""
        return self.d0 - self.r0

    def violations(self) -> list[str]:
        out = []
        if not self.r0 >= 0:
            out.append(f"r0 must be nonnegative (got r0={self.r0})")
        if not self.d0 > 0:
            out.append(f"d0 must be positive (got d0={self.d0})")
        if not self.lambda0 < 0:
            out.append(
                f"lambda0 must be negative (got lambda0={self.lambda0})"
            )
        return out


@dataclass(frozen=True)
class ResistantRates:
    """Birth/death rates of resistant mutants (supercritical)."""

    r1: float
    d1: float

    @property
    def lambda1(self) -> float:
        return self.r1 - self.d1

    def violations(self) -> list[str]:
        out = []
        if not self.r1 > 0:
            out.append(f"r1 must be positive (got r1={self.r1})")
        if not self.d1 >= 0:
            out.append(f"d1 must be nonnegative (got d1={self.d1})")
        if not self.lambda1 > 0:
            out.append(
                f"lambda1 must be positive (got lambda1={self.lambda1})"
            )
        return out


@dataclass(frozen=True)
class MutationLaw:
    """Mutation intensity mu and population-size scaling exponent alpha.

    Mutants are created at rate Z0(t) * mu * n**(-alpha), alpha in (0, 1).
    """

    mu: float
    alpha: float

    def violations(self) -> list[str]:
        out = []
        if not self.mu > 0:
            out.append(f"mu must be positive (got mu={self.mu})")
        if not 0 < self.alpha < 1:
            out.append(f"alpha must lie in (0,1) (got alpha={self.alpha})")
        return out


@dataclass(frozen=True)
class SubThreshold:
    """Initial mutant count negligible relative to n**(1-alpha).

    A fixed ``count`` (default 0) is o(n**(1-alpha)) for any alpha < 1.
    Selects rate-function case 1.
    """

    count: int = 0
    case: int = field(default=1, init=False, repr=False)

    def initial_mutants(self, n: int, alpha: float) -> int:
        return self.count

    def violations(self) -> list[str]:
        if self.count < 0:
            return [f"initial mutant count must be >= 0 (got {self.count})"]
        return []


@dataclass(frozen=True)
class Critical:
    """Initial mutant count X(n) ~ n**(1-alpha), concretized as
    round(n**(1-alpha)).  Selects rate-function case 2."""

    case: int = field(default=2, init=False, repr=False)

    def initial_mutants(self, n: int, alpha: float) -> int:
        return round(n ** (1.0 - alpha))

    def violations(self) -> list[str]:
        return []


@dataclass(frozen=True)
class PreExisting:
    """Initial mutant count X(n) ~ n**(1-beta) with 0 < beta < alpha.

    Resistance is then driven by the pre-existing mutants; selects
    rate-function case 3.
    """

    beta: float
    case: int = field(default=3, init=False, repr=False)

    def initial_mutants(self, n: int, alpha: float) -> int:
        return round(n ** (1.0 - self.beta))

    def violations(self) -> list[str]:
        if not self.beta > 0:
            return [f"beta must be positive (got beta={self.beta})"]
        return []


Regime = Union[SubThreshold, Critical, PreExisting]


@dataclass(frozen=True)
class ModelParams:
    """All model rates plus the initial-mutant regime."""

    sensitive: SensitiveRates
    resistant: ResistantRates
    mutation: MutationLaw
    regime: Regime = SubThreshold()

    # Flat accessors; every formula in the analytic and rate-function
    # modules reads through these.
    @property
    def r0(self) -> float:
        return self.sensitive.r0

    @property
    def d0(self) -> float:
        return self.sensitive.d0

    @property
    def lambda0(self) -> float:
        return self.sensitive.lambda0

    @property
    def r(self) -> float:
        return self.sensitive.r

    @property
    def r1(self) -> float:
        return self.resistant.r1

    @property
    def d1(self) -> float:
        return self.resistant.d1

    @property
    def lambda1(self) -> float:
        return self.resistant.lambda1

    @property
    def mu(self) -> float:
        return self.mutation.mu

    @property
    def alpha(self) -> float:
        return self.mutation.alpha

    @property
    def case(self) -> int:
        return self.regime.case

    def initial_mutants(self, n: int) -> int:
        """Concrete X for simulation at population size n."""
        return self.regime.initial_mutants(n, self.alpha)

    def violations(self) -> list[str]:
        out = []
        out += self.sensitive.violations()
        out += self.resistant.violations()
        out += self.mutation.violations()
        out += self.regime.violations()
        if isinstance(self.regime, PreExisting) and not (
            self.regime.beta < self.alpha
        ):
            out.append(
                "pre-existing regime requires beta < alpha "
                f"(got beta={self.regime.beta}, alpha={self.alpha})"
            )
        return out


@dataclass(frozen=True)
class ScenarioConfig:
    """One experiment scenario: initial size, threshold, early offset."""

    n: int
    a: float = 1.0
    y: float = 1.0
    # zeta_n/t_n -> alpha*r/lambda1 < 1 and xi_n/t_n -> alpha*r/(lambda1+r)
    # < 1, so 3*t_n bounds both passage times at desk scale.
    horizon_multiplier: float = 3.0

    def violations(self) -> list[str]:
        out = []
        if not (isinstance(self.n, int) and self.n >= 1):
            out.append(f"n must be a positive integer (got n={self.n})")
        if not self.a > 0:
            out.append(f"a must be positive (got a={self.a})")
        if not self.y > 0:
            out.append(f"y must be positive (got y={self.y})")
        if not self.horizon_multiplier > 0:
            out.append(
                "horizon_multiplier must be positive "
                f"(got {self.horizon_multiplier})"
            )
        return out


class InvalidConfiguration(ValueError):
    """Raised by ``validate``; carries the full list of violations."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(violations))


def validate(
    params: ModelParams, scenario: ScenarioConfig
) -> tuple[ModelParams, ScenarioConfig]:
    """Check every invariant and return the configuration unchanged.

    Raises :class:`InvalidConfiguration` listing all violated invariants
    (field name and observed value) if any check fails.  Idempotent.
    """
    violations = params.violations() + scenario.violations()
    if not violations:
        x = params.initial_mutants(scenario.n)
        if not x < scenario.n:
            violations.append(
                f"initial mutant count X must be < n (got X={x}, "
                f"n={scenario.n})"
            )
    if violations:
        raise InvalidConfiguration(violations)
    return params, scenario


def time_scale(n: int, r: float) -> float:
    """Reference time scale t_n = log(n) / r.

    Strictly increasing in n, strictly decreasing in r.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1 (got {n})")
    if not r > 0:
        raise ValueError(f"decay rate r must be positive (got {r})")
    return math.log(n) / r


# ---------------------------------------------------------------------------
# Flat key-value configuration files and overrides.
#
# File format: one "key = value" per line, '#' comments, blank lines
# ignored.  The same keys are accepted as CLI flags and as environment
# variables with the LDBRANCH_ prefix (e.g. LDBRANCH_R1=0.5).

ENV_PREFIX = "LDBRANCH_"

CONFIG_KEYS = (
    "r0",
    "d0",
    "r1",
    "d1",
    "mu",
    "alpha",
    "regime",
    "beta",
    "n",
    "a",
    "y",
    "horizon_multiplier",
    "seed",
)

DEFAULT_SETTINGS = {
    "r0": 0.3,
    "d0": 0.5,
    "r1": 0.4,
    "d1": 0.2,
    "mu": 0.1,
    "alpha": 0.5,
    "regime": "subthreshold",
    "beta": None,
    "n": 1000,
    "a": 1.0,
    "y": 1.0,
    "horizon_multiplier": 3.0,
    "seed": 0,
}

_REGIME_NAMES = ("subthreshold", "critical", "preexisting")


class ConfigError(ValueError):
    pass


def _coerce(key: str, raw: str):
    if key == "regime":
        value = raw.strip().lower()
        if value not in _REGIME_NAMES:
            raise ConfigError(
                f"regime must be one of {_REGIME_NAMES} (got {raw!r})"
            )
        return value
    if key in ("n", "seed"):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"key {key!r} expects an integer (got {raw!r})")
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r} expects a number (got {raw!r})")


def load_config(path: str) -> dict:
    """Parse a flat key-value config file into a settings dict."""
    settings = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(
                    f"{path}:{lineno}: expected 'key = value' (got {line!r})"
                )
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            settings[key] = _coerce(key, raw)
    return settings


def apply_env_overrides(settings: dict, environ=None) -> dict:
    """Overlay LDBRANCH_<KEY> environment variables onto settings."""
    environ = os.environ if environ is None else environ
    out = dict(settings)
    for key in CONFIG_KEYS:
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is not None:
            out[key] = _coerce(key, raw)
    return out


def apply_cli_overrides(settings: dict, overrides: dict) -> dict:
    """Overlay non-None CLI flag values (highest precedence)."""
    out = dict(settings)
    for key, value in overrides.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            out[key] = value
    return out


def build_from_settings(settings: dict) -> tuple[ModelParams, ScenarioConfig, int]:
    """Turn a settings dict into validated (params, scenario, seed)."""
    merged = dict(DEFAULT_SETTINGS)
    for key in settings:
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    merged.update(settings)

    regime_name = merged["regime"]
    if regime_name == "subthreshold":
        regime: Regime = SubThreshold()
    elif regime_name == "critical":
        regime = Critical()
    elif regime_name == "preexisting":
        if merged["beta"] is None:
            raise ConfigError("regime 'preexisting' requires key 'beta'")
        regime = PreExisting(beta=float(merged["beta"]))
    else:
        raise ConfigError(f"regime must be one of {_REGIME_NAMES}")

    params = ModelParams(
        sensitive=SensitiveRates(r0=float(merged["r0"]), d0=float(merged["d0"])),
        resistant=ResistantRates(r1=float(merged["r1"]), d1=float(merged["d1"])),
        mutation=MutationLaw(mu=float(merged["mu"]), alpha=float(merged["alpha"])),
        regime=regime,
    )
    scenario = ScenarioConfig(
        n=int(merged["n"]),
        a=float(merged["a"]),
        y=float(merged["y"]),
        horizon_multiplier=float(merged["horizon_multiplier"]),
    )
    validate(params, scenario)
    return params, scenario, int(merged["seed"])


def with_mu(params: ModelParams, mu: float) -> ModelParams:
    """Copy of params with a different mutation intensity."""
    return replace(params, mutation=replace(params.mutation, mu=mu))
