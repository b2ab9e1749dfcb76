"""Scenario files: flat TOML with units in the key names.

Example::

    n_t = 16
    theta_tag_deg = 45.0
    p_t_dbm = 0.0
    gamma_tth_db = 15.0

dB/dBm and degrees exist only here; :meth:`Scenario.system_config` and
:meth:`Scenario.channels` convert to linear units and radians once.
"""

from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass, field, fields, replace
from importlib import resources


from .model import ChannelSet, SystemConfig
from .optimizer import StoppingRule
from .units import db_to_linear, dbm_to_mw

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ScenarioParseError(ValueError):
    pass


class ScenarioValidationError(ValueError):
    pass


# Values the source publication does not pin down; reported in the manifest
# whenever a scenario relies on them.
ASSUMED_DEFAULTS = {"alpha": 0.5, "L": 1024}


@dataclass(frozen=True)
class Scenario:
    n_t: int = 16
    n_r: int = 16
    theta_tag_deg: float = 45.0
    theta_ue_deg: float = 126.0
    fading_f: float = 0.8
    fading_b: float = 0.8
    fading_u: float = 0.8
    h_tu: float = 0.5
    alpha: float = 0.5
    sigma2_ap_dbm: float = -40.0
    sigma2_t_dbm: float = -40.0
    sigma2_u_dbm: float = -40.0
    p_t_dbm: float = 0.0
    p_t_dbm_sweep: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    gamma_tth_db: float = 15.0
    gamma_apth_db: float = 12.0
    p_f: float = 0.1
    roc_p_f: tuple = (0.001, 0.01, 0.05, 0.1, 0.2, 0.5)
    L: int = 1024
    seed: int = 0
    n_trials: int = 100_000
    beampattern_step_deg: float = 1.0
    delta_th: float = 1e-4
    i_max: int = 50
    eps_th: float = 1e-5
    k_max: int = 30
    assumed: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ScenarioValidationError("alpha must be positive")
        if self.n_trials < 1:
            raise ScenarioValidationError("n_trials must be positive")
        if not self.beampattern_step_deg > 0:
            raise ScenarioValidationError("beampattern_step_deg must be positive")
        try:
            self.system_config()
            self.stopping_rule()
            for p in self.roc_p_f:
                if not 0 < p < 1:
                    raise ValueError(f"roc_p_f entry {p} outside (0, 1)")
        except ValueError as exc:
            raise ScenarioValidationError(str(exc)) from exc

    # -- conversions -------------------------------------------------------
    def system_config(self) -> SystemConfig:
        return SystemConfig(
            n_t=self.n_t, n_r=self.n_r,
            sigma2_ap=float(dbm_to_mw(self.sigma2_ap_dbm)),
            sigma2_t=float(dbm_to_mw(self.sigma2_t_dbm)),
            sigma2_u=float(dbm_to_mw(self.sigma2_u_dbm)),
            alpha=self.alpha,
            gamma_tth=float(db_to_linear(self.gamma_tth_db)),
            gamma_apth=float(db_to_linear(self.gamma_apth_db)),
            p_t=float(dbm_to_mw(self.p_t_dbm)),
            L=self.L, p_f=self.p_f,
        )

    def channels(self) -> ChannelSet:
        return ChannelSet.los(self.system_config(), math.radians(self.theta_tag_deg),
                              math.radians(self.theta_ue_deg), self.fading_f,
                              self.fading_b, self.fading_u, self.h_tu)

    def stopping_rule(self) -> StoppingRule:
        return StoppingRule(delta_th=self.delta_th, i_max=self.i_max,
                            eps_th=self.eps_th, k_max=self.k_max)

    def with_values(self, **changes) -> "Scenario":
        try:
            return replace(self, **changes)
        except (TypeError, ValueError) as exc:
            raise ScenarioValidationError(str(exc)) from exc

    # -- serialization -----------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        known = {f.name: f for f in fields(cls) if f.name != "assumed"}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise ScenarioValidationError(f"unknown scenario keys: {', '.join(unknown)}")
        kw = {}
        for name, value in d.items():
            kw[name] = _coerce(name, value, known[name].default)
        assumed = tuple(sorted(k for k in ASSUMED_DEFAULTS if k not in d))
        try:
            return cls(**kw, assumed=assumed)
        except TypeError as exc:
            raise ScenarioValidationError(str(exc)) from exc

    @classmethod
    def from_toml(cls, text: str) -> "Scenario":
        try:
            d = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioParseError(str(exc)) from exc
        nested = [k for k, v in d.items() if isinstance(v, dict)]
        if nested:
            raise ScenarioParseError(f"scenario must be flat; found tables {nested}")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "assumed"}

    def to_toml(self) -> str:
        lines = []
        for key, value in sorted(self.to_dict().items()):
            lines.append(f"{key} = {_toml_value(value)}")
        return "\n".join(lines) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_toml().encode("utf-8")).hexdigest()


def _coerce(name, value, default):
    if isinstance(value, bool):
        raise ScenarioValidationError(f"{name}: booleans are not accepted")
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(_is_number(v) for v in value):
            raise ScenarioValidationError(f"{name}: expected a list of numbers")
        return tuple(float(v) for v in value)
    if isinstance(default, int):
        if not (isinstance(value, int) or (isinstance(value, float) and value.is_integer())):
            raise ScenarioValidationError(f"{name}: expected an integer")
        return int(value)
    if not _is_number(value):
        raise ScenarioValidationError(f"{name}: expected a number")
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioValidationError(f"{name}: must be finite")
    return value


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _toml_value(v):
    if isinstance(v, tuple):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def load_scenario(path: str) -> Scenario:
    """Read a scenario file; ``"default"`` selects the bundled default."""
    if path == "default":
        text = resources.files("bisac").joinpath("scenarios/default.toml").read_text("utf-8")
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ScenarioParseError(f"cannot read scenario {path}: {exc}") from exc
    return Scenario.from_toml(text)


def parse_sweep(text: str):
    """``key=a:b:step`` -> (key, values), both endpoints inclusive."""
    try:
        key, rng = text.split("=", 1)
        a, b, step = (float(v) for v in rng.split(":"))
    except ValueError as exc:
        raise ScenarioParseError(f"bad sweep {text!r}; expected key=a:b:step") from exc
    if step <= 0 or b < a:
        raise ScenarioParseError(f"bad sweep range in {text!r}")
    n = int(math.floor((b - a) / step + 1e-9)) + 1
    values = [round(a + i * step, 12) for i in range(n)]
    return key.strip(), values
