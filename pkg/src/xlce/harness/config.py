"""Experiment configuration: a strict, sectioned key-value file.

Configs are TOML with a fixed schema; unknown sections or keys are
rejected outright so typos fail fast instead of silently running with
defaults.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field, fields

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..channel import SystemConfig
from ..refine import MarkovPrior

ESTIMATOR_CHOICES = ("std-sbl", "sbl-gnn")


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


@dataclass
class SystemSection:
    n_t: int = 64
    m_sub: int = 4
    k_sc: int = 8
    f_c: float = 30.0e9
    f_s: float = 1.6e9
    n_rf: int = 1
    p_slots: int = 8
    g_paths: int = 4
    r_min_m: float = 10.0
    r_max_m: float = 50.0


@dataclass
class SweepSection:
    snr_db: list = field(default_factory=lambda: [5.0])
    p_slots: list = field(default_factory=list)  # empty: use [system].p_slots


@dataclass
class RunSection:
    trials: int = 200
    estimators: list = field(default_factory=lambda: ["std-sbl"])
    refinement: bool = True
    include_centralized: bool = True
    measure_time: bool = False
    master_seed: int = 0
    checkpoint: str = ""


@dataclass
class Stage1Section:
    std_max_iters: int = 200
    std_tol: float = 1e-6
    gnn_layers: int = 5
    gnn_rounds: int = 3
    edge_policy: str = "block"  # "full", "block", or a positive integer as string
    # "known": hold the calibrated noise precision fixed; "refresh":
    # re-estimate it every round starting from 1; "fixed1": hold 1
    zeta_policy: str = "known"


@dataclass
class MrfSection:
    alpha: float = 0.1
    beta: float = 0.5


@dataclass
class MarkovSection:
    rho: float = 0.1
    p10: float = 0.1
    a: float = 1.0
    b: float = 1.0
    a_bar: float = 1.0
    b_bar: float = 1e-6
    max_iter: int = 50
    tol: float = 1e-6
    exact_pi_out: bool = False


@dataclass
class TrainSection:
    count: int = 1024
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-4
    snr_min_db: float = -5.0
    snr_max_db: float = 15.0
    dtype: str = "float32"


_SECTIONS = {
    "system": SystemSection,
    "sweep": SweepSection,
    "run": RunSection,
    "stage1": Stage1Section,
    "mrf": MrfSection,
    "markov": MarkovSection,
    "train": TrainSection,
}


@dataclass
class ExperimentConfig:
    """All knobs of one experiment, grouped by section."""

    system: SystemSection = field(default_factory=SystemSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    run: RunSection = field(default_factory=RunSection)
    stage1: Stage1Section = field(default_factory=Stage1Section)
    mrf: MrfSection = field(default_factory=MrfSection)
    markov: MarkovSection = field(default_factory=MarkovSection)
    train: TrainSection = field(default_factory=TrainSection)

    def system_config(self, p_slots: int | None = None) -> SystemConfig:
        s = self.system
        return SystemConfig(
            n_t=s.n_t,
            m_sub=s.m_sub,
            k_sc=s.k_sc,
            f_c=s.f_c,
            f_s=s.f_s,
            n_rf=s.n_rf,
            p_slots=s.p_slots if p_slots is None else p_slots,
        )

    def markov_prior(self) -> MarkovPrior:
        m = self.markov
        return MarkovPrior.from_sparsity(
            rho=m.rho, p10=m.p10, a=m.a, b=m.b, a_bar=m.a_bar, b_bar=m.b_bar
        )

    def edge_policy(self):
        policy = self.stage1.edge_policy
        if policy in ("full", "block"):
            return policy
        try:
            return int(policy)
        except ValueError:
            raise ConfigError(f"[stage1] edge_policy must be 'full', 'block' or an integer, got {policy!r}")

    def zeta_mode(self) -> tuple[bool, str | float]:
        """(update_zeta, zeta_init) pair for the configured policy."""
        policy = self.stage1.zeta_policy
        if policy == "known":
            return False, "true"
        if policy == "refresh":
            return True, 1.0
        if policy == "fixed1":
            return False, 1.0
        raise ConfigError(
            f"[stage1] zeta_policy must be 'known', 'refresh' or 'fixed1', got {policy!r}"
        )

    def train_dtype(self):
        name = self.train.dtype
        if name not in ("float32", "float64"):
            raise ConfigError(f"[train] dtype must be 'float32' or 'float64', got {name!r}")
        return np.float32 if name == "float32" else np.float64

    def p_slots_sweep(self) -> list[int]:
        return list(self.sweep.p_slots) or [self.system.p_slots]

    def validate(self) -> "ExperimentConfig":
        if not self.sweep.snr_db:
            raise ConfigError("[sweep] snr_db must not be empty")
        if self.run.trials < 1:
            raise ConfigError("[run] trials must be at least 1")
        for est in self.run.estimators:
            if est not in ESTIMATOR_CHOICES:
                raise ConfigError(
                    f"[run] unknown estimator {est!r}; choices: {', '.join(ESTIMATOR_CHOICES)}"
                )
        if not self.run.estimators:
            raise ConfigError("[run] estimators must not be empty")
        self.edge_policy()
        self.zeta_mode()
        self.train_dtype()
        self.system_config()  # raises on inconsistent dimensions
        for p in self.p_slots_sweep():
            self.system_config(p_slots=p)
        self.markov_prior()
        return self

    def digest(self) -> int:
        """Stable 64-bit hash of the full configuration."""
        canon = []
        for name, section_cls in _SECTIONS.items():
            section = getattr(self, name)
            for f in fields(section_cls):
                canon.append(f"{name}.{f.name}={getattr(section, f.name)!r}")
        blob = "\n".join(canon).encode("utf-8")
        return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def _coerce(section: str, key: str, default, value):
    """Type-check one key against its default's type."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"[{section}] {key} must be a boolean, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"[{section}] {key} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"[{section}] {key} must be a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"[{section}] {key} must be a list, got {value!r}")
        return list(value)
    raise ConfigError(f"[{section}] {key}: unsupported value {value!r}")


def parse_config(data: dict) -> ExperimentConfig:
    """Build a validated config from parsed TOML data, rejecting unknowns."""
    unknown_sections = set(data) - set(_SECTIONS)
    if unknown_sections:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown_sections))}")
    cfg = ExperimentConfig()
    for name, section_cls in _SECTIONS.items():
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"[{name}] must be a section")
        known = {f.name: f for f in fields(section_cls)}
        unknown = set(raw) - set(known)
        if unknown:
            raise ConfigError(f"[{name}] unknown key(s): {', '.join(sorted(unknown))}")
        section = getattr(cfg, name)
        for key, value in raw.items():
            setattr(section, key, _coerce(name, key, getattr(section, key), value))
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    """Load and validate a TOML experiment config."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")
    return parse_config(data)
