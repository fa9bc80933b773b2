"""Scenario configuration: one key-value file (YAML or JSON) per scenario.

Sections mirror the pipeline stages.  Every field can be overridden with a
dotted ``section.key=value`` string, which is how the command line maps
its flags onto the file.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, DomainError
from .noise_model import DEFAULT_Q_ETA, R_HEAVE, R_PITCH, NoiseConfig
from .wave_env import BretschneiderSpec, FrequencyGrid, VesselConfig


@dataclass
class VesselSection:
    L: float = 7.0
    B: float = 2.77
    T: float = 0.35
    CoG_x: float = 2.11
    CoG_z: float = 0.79
    V: float = 4.0
    beta: float = math.pi
    # hull parameters used to simulate the truth (and handed to the KF baseline)
    truth_B: float = 1.47
    truth_T: float = 0.35


@dataclass
class SeaSection:
    Hs: float = 1.25
    Tz: float = 7.0


@dataclass
class GridSection:
    synth_min: float = 0.2
    synth_max: float = 1.6
    synth_n: int = 30
    est_min: float = 0.40
    est_max: float = 1.50


@dataclass
class NoiseSection:
    # None means "derive from the first window_s seconds of measurements"
    lam: float | None = None
    a_max: float | None = None
    x_prior: float | None = None
    xdot_prior: float | None = None
    window_s: float = 10.0
    lam_scale: float = 1.0
    a_max_scale: float = 1.0
    Q_eta: list = field(default_factory=lambda: np.diagonal(DEFAULT_Q_ETA).tolist())
    R_heave: list = field(default_factory=lambda: np.diagonal(R_HEAVE).tolist())
    R_pitch: list = field(default_factory=lambda: np.diagonal(R_PITCH).tolist())
    tune: bool = False
    tune_seconds: float = 30.0
    rel_tol: float = 0.05
    max_iter: int = 6


@dataclass
class FilterSection:
    mode: str = "srckf"            # srckf | kf
    phase_mode: str = "zero"       # zero | oracle | hold
    channels: str = "auto"         # auto | heave | both
    share_cov: bool = False
    init_var: float = 100.0
    eta_var: list = field(default_factory=lambda: [0.25, 0.05])
    eta_seed: int | None = None    # None: derived from run.seed
    reflect: bool = True


@dataclass
class SpectrumSection:
    channel: str = "heave"         # heave | pitch | combined
    hop_fraction: float = 0.5
    wave_domain_widths: bool = True
    P_floor: float = 1e-4
    short_record: str = "pad"      # pad | error
    burn_in_s: float = 10.0


@dataclass
class RunSection:
    Ts: float = 0.04
    duration: float = 90.0
    seed: int = 0
    n_runs: int = 10
    parallelism: int = 1


@dataclass
class OutputSection:
    dir: str = "out"


@dataclass
class ScenarioConfig:
    vessel: VesselSection = field(default_factory=VesselSection)
    sea: SeaSection = field(default_factory=SeaSection)
    grid: GridSection = field(default_factory=GridSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    filter: FilterSection = field(default_factory=FilterSection)
    spectrum: SpectrumSection = field(default_factory=SpectrumSection)
    run: RunSection = field(default_factory=RunSection)
    output: OutputSection = field(default_factory=OutputSection)

    # ---- derived objects -------------------------------------------------

    def nominal_vessel(self) -> VesselConfig:
        v = self.vessel
        return VesselConfig(L=v.L, B=v.B, T=v.T, CoG_x=v.CoG_x, CoG_z=v.CoG_z, V=v.V, beta=v.beta)

    def truth_vessel(self) -> VesselConfig:
        return self.nominal_vessel().with_eta([self.vessel.truth_B, self.vessel.truth_T])

    @property
    def eta0(self) -> np.ndarray:
        """Nominal parameters [B0, CoG_z] at which the noise priors are evaluated."""
        return np.array([self.vessel.B, self.vessel.CoG_z])

    def sea_spec(self) -> BretschneiderSpec:
        return BretschneiderSpec(self.sea.Hs, self.sea.Tz)

    def synthesis_grid(self) -> FrequencyGrid:
        g = self.grid
        return FrequencyGrid.uniform(g.synth_min, g.synth_max, g.synth_n)

    def estimation_grid(self) -> FrequencyGrid:
        """Synthesis spacing restricted to [est_min, est_max]."""
        g = self.grid
        return self.synthesis_grid().truncate(g.est_min - 1e-12, g.est_max + 1e-12)

    def noise_config(self, channel: str, sample: np.ndarray) -> NoiseConfig:
        n = self.noise
        R = np.diag(n.R_heave if channel == "heave" else n.R_pitch)
        base = NoiseConfig.from_sample(sample, self.run.Ts, self.eta0, R=R, window_s=n.window_s,
                                       Q_eta=np.diag(n.Q_eta))
        overrides = {k: getattr(n, k) for k in ("lam", "a_max", "x_prior", "xdot_prior") if getattr(n, k) is not None}
        cfg = dataclasses.replace(base, **overrides)
        return dataclasses.replace(cfg, lam=cfg.lam * n.lam_scale, a_max=cfg.a_max * n.a_max_scale)

    # ---- (de)serialisation -----------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def copy(self, **overrides) -> "ScenarioConfig":
        """Deep copy, optionally with ``{"section.key": value}`` changes."""
        out = ScenarioConfig.from_dict(self.to_dict())
        for k, v in overrides.items():
            out.set(k, v)
        out.validate()
        return out

    @classmethod
    def from_dict(cls, data: dict | None) -> "ScenarioConfig":
        cfg = cls()
        for section, values in (data or {}).items():
            if not hasattr(cfg, section) or not dataclasses.is_dataclass(getattr(cfg, section)):
                raise ConfigError(f"unknown config section {section!r}")
            if not isinstance(values, dict):
                raise ConfigError(f"section {section!r} must be a mapping")
            for key, val in values.items():
                cfg.set(f"{section}.{key}", val)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        return cls.from_dict(data)

    def dump(self, path) -> Path:
        path = Path(path)
        data = self.to_dict()
        if path.suffix == ".json":
            path.write_text(json.dumps(data, indent=2))
        else:
            path.write_text(yaml.safe_dump(data, sort_keys=False))
        return path

    def set(self, dotted: str, value) -> None:
        """Assign ``section.key``; strings are parsed as YAML scalars."""
        try:
            section, key = dotted.split(".", 1)
        except ValueError:
            raise ConfigError(f"override {dotted!r} is not of the form section.key") from None
        sec = getattr(self, section, None)
        if sec is None or not dataclasses.is_dataclass(sec):
            raise ConfigError(f"unknown config section {section!r}")
        names = {f.name for f in dataclasses.fields(sec)}
        if key not in names:
            raise ConfigError(f"unknown config key {dotted!r}")
        if isinstance(value, str):
            try:
                value = yaml.safe_load(value)
            except yaml.YAMLError:
                pass
        setattr(sec, key, value)

    def apply_overrides(self, overrides) -> "ScenarioConfig":
        for item in overrides or ():
            if "=" not in item:
                raise ConfigError(f"override {item!r} must look like section.key=value")
            k, v = item.split("=", 1)
            self.set(k.strip(), v.strip())
        self.validate()
        return self

    def validate(self) -> None:
        f = self.filter
        choices = {
            ("filter", "mode"): ("srckf", "kf"),
            ("filter", "phase_mode"): ("zero", "oracle", "hold"),
            ("filter", "channels"): ("auto", "heave", "both"),
            ("spectrum", "channel"): ("heave", "pitch", "combined"),
            ("spectrum", "short_record"): ("pad", "error"),
        }
        for (s, k), allowed in choices.items():
            val = getattr(getattr(self, s), k)
            if val not in allowed:
                raise ConfigError(f"{s}.{k} must be one of {allowed}, got {val!r}")
        if not self.run.Ts > 0 or not self.run.duration > 0:
            raise ConfigError("run.Ts and run.duration must be positive")
        if self.run.n_runs < 1 or self.run.parallelism < 1:
            raise ConfigError("run.n_runs and run.parallelism must be at least 1")
        if len(f.eta_var) != 2 or min(f.eta_var) <= 0 or f.init_var <= 0:
            raise ConfigError("filter.init_var and filter.eta_var must be positive")
        if not 0 < self.spectrum.hop_fraction <= 1:
            raise ConfigError("spectrum.hop_fraction must lie in (0, 1]")
        if self.spectrum.burn_in_s < 0:
            raise ConfigError("spectrum.burn_in_s must be non-negative")
        try:
            self.nominal_vessel()
            self.truth_vessel()
            self.sea_spec()
            self.estimation_grid()
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
