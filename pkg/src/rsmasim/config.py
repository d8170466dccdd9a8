"""Experiment configuration: YAML file with nested sections, strict validation.

Example (these are the defaults, printable with ``rsmasim --dump-config``)::

    scenario:
      case: 1          # 1..6, or null to use alpha_db/rho below
      alpha_db: 0.0
      rho: 0.0
      taps: 4
    mcs:
      common: [BPSK-1/2, BPSK-3/4, QPSK-1/2, QPSK-3/4, 16QAM-1/2, 16QAM-3/4]
      private: [...]
      tie_private: true  # both private streams use the same MCS
    run: {runs_per_point: 75, master_seed: 0, receiver: both, genie_csi: true, ...}
    mcs_sweep: {snr_db: [...], t: [...]}
    ber_sweep: {mcs: [QPSK-3/4, QPSK-1/2, QPSK-1/2], snr_db: [...], t: ..., betas: [0.001]}
    output: {dir: results, formats: [csv, json]}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .channel import ScenarioTarget, case_target

ALL_MCS = ["BPSK-1/2", "BPSK-3/4", "QPSK-1/2", "QPSK-3/4", "16QAM-1/2", "16QAM-3/4"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class ScenarioSection:
    case: int | None = 1
    alpha_db: float = 0.0
    rho: float = 0.0
    taps: int = 4

    def target(self) -> ScenarioTarget:
        if self.case is not None:
            return case_target(self.case, self.taps)
        return ScenarioTarget(self.alpha_db, self.rho, self.taps)


@dataclass
class McsSection:
    common: list = field(default_factory=lambda: list(ALL_MCS))
    private: list = field(default_factory=lambda: list(ALL_MCS))
    tie_private: bool = True


@dataclass
class RunSection:
    runs_per_point: int = 75
    master_seed: int = 0
    receiver: str = "both"
    genie_csi: bool = True
    time_domain: bool = False
    list_size: int = 8
    workers: int = 1


@dataclass
class McsSweepSection:
    snr_db: list = field(default_factory=lambda: [20.0])
    t: list = field(default_factory=lambda: [0.5])


@dataclass
class BerSweepSection:
    mcs: list = field(default_factory=lambda: ["QPSK-3/4", "QPSK-1/2", "QPSK-1/2"])
    snr_db: list = field(default_factory=lambda: [float(x) for x in range(0, 31, 2)])
    t: float = 0.5
    betas: list = field(default_factory=lambda: [1e-3])
    bootstrap: int = 1000


@dataclass
class OutputSection:
    dir: str = "results"
    formats: list = field(default_factory=lambda: ["csv", "json"])


@dataclass
class ExperimentConfig:
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    mcs: McsSection = field(default_factory=McsSection)
    run: RunSection = field(default_factory=RunSection)
    mcs_sweep: McsSweepSection = field(default_factory=McsSweepSection)
    ber_sweep: BerSweepSection = field(default_factory=BerSweepSection)
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def receivers(self) -> tuple[str, ...]:
        return ("jd", "sic") if self.run.receiver == "both" else (self.run.receiver,)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, data: dict | None) -> "ExperimentConfig":
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        kwargs = {}
        sections = {f.name: f for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if key not in sections:
                raise ConfigError(f"{key}: unknown section (expected one of {', '.join(sections)})")
            section_cls = sections[key].default_factory().__class__
            kwargs[key] = _build_section(section_cls, key, value)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        from .transceiver import Mcs

        s = self.scenario
        if s.case is not None and s.case not in range(1, 7):
            raise ConfigError(f"scenario.case: must be 1..6 or null, got {s.case!r}")
        if not 0.0 <= s.rho <= 1.0:
            raise ConfigError(f"scenario.rho: must lie in [0, 1], got {s.rho!r}")
        if s.taps < 1:
            raise ConfigError(f"scenario.taps: must be >= 1, got {s.taps!r}")
        for name in ("common", "private"):
            values = getattr(self.mcs, name)
            if not values:
                raise ConfigError(f"mcs.{name}: grid must not be empty")
            for v in values:
                try:
                    Mcs.parse(v)
                except ValueError as exc:
                    raise ConfigError(f"mcs.{name}: {exc}") from None
        if len(self.ber_sweep.mcs) != 3:
            raise ConfigError("ber_sweep.mcs: expected [common, private1, private2]")
        for v in self.ber_sweep.mcs:
            try:
                Mcs.parse(v)
            except ValueError as exc:
                raise ConfigError(f"ber_sweep.mcs: {exc}") from None
        r = self.run
        if r.runs_per_point < 1:
            raise ConfigError(f"run.runs_per_point: must be >= 1, got {r.runs_per_point!r}")
        if r.receiver not in ("jd", "sic", "both"):
            raise ConfigError(f"run.receiver: must be jd, sic or both, got {r.receiver!r}")
        if r.list_size < 1:
            raise ConfigError(f"run.list_size: must be >= 1, got {r.list_size!r}")
        if r.workers < 1:
            raise ConfigError(f"run.workers: must be >= 1, got {r.workers!r}")
        if r.master_seed < 0:
            raise ConfigError(f"run.master_seed: must be a non-negative integer, got {r.master_seed!r}")
        if not self.mcs_sweep.snr_db:
            raise ConfigError("mcs_sweep.snr_db: grid must not be empty")
        if not self.mcs_sweep.t:
            raise ConfigError("mcs_sweep.t: grid must not be empty")
        for t in list(self.mcs_sweep.t) + [self.ber_sweep.t]:
            if not 0.0 <= t <= 1.0:
                raise ConfigError(f"t: power fraction {t!r} outside [0, 1]")
        snr = list(self.ber_sweep.snr_db)
        if len(snr) < 2 or any(b <= a for a, b in zip(snr, snr[1:])):
            raise ConfigError("ber_sweep.snr_db: need at least two strictly increasing values")
        for b in self.ber_sweep.betas:
            if not 0.0 < b < 0.5:
                raise ConfigError(f"ber_sweep.betas: target {b!r} outside (0, 0.5)")
        if self.ber_sweep.bootstrap < 0:
            raise ConfigError("ber_sweep.bootstrap: must be >= 0")
        bad = set(self.output.formats) - {"csv", "json"}
        if bad or not self.output.formats:
            raise ConfigError(f"output.formats: expected a non-empty subset of csv, json, got {self.output.formats!r}")


def _build_section(section_cls, key: str, value):
    if value is None:
        return section_cls()
    if not isinstance(value, dict):
        raise ConfigError(f"{key}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(section_cls)}
    defaults = section_cls()
    out = {}
    for name, v in value.items():
        if name not in fields:
            raise ConfigError(f"{key}.{name}: unknown field (expected one of {', '.join(fields)})")
        out[name] = _coerce(f"{key}.{name}", getattr(defaults, name), v)
    return section_cls(**out)


def _coerce(path: str, default, value):
    if value is None:
        if path == "scenario.case":
            return None
        raise ConfigError(f"{path}: value must not be null")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if path == "scenario.case" or isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            value = [value]
        if default and isinstance(default[0], float):
            try:
                return [float(v) for v in value]
            except (TypeError, ValueError):
                raise ConfigError(f"{path}: expected a list of numbers, got {value!r}") from None
        return [str(v) for v in value]
    if isinstance(default, str):
        return str(value)
    return value
