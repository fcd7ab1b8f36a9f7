"""Flat `section.key = value` experiment configuration.

Blank lines and `#` comments are ignored. Unknown keys and malformed values
raise ConfigError with the offending line number. The only environment
override honoured anywhere is FLUID_OUT_DIR for the output directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import IID, LABEL_SKEW
from .errors import ConfigError
from .orchestrator import STRATEGIES, RunSettings, StragglerPolicy
from .simclient import ClientSpec, LoadWindow


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _split(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


@dataclass
class ExperimentConfig:
    # dataset: the default blob benchmark keeps runs in the seconds range
    # while leaving enough headroom for dropout strategies to differ
    classes: int = 5
    dims: int = 5
    per_class: int = 50
    partition_mode: str = LABEL_SKEW
    alpha: float = 0.3
    csv_path: str | None = None
    # model
    hidden: tuple = (12, 8)
    # clients
    client_count: int = 5
    base_times: tuple = ()
    noise_pct: float = 0.05
    load_windows: dict = field(default_factory=dict)  # client id -> [LoadWindow]
    # experiment
    strategies: tuple = ("invariant",)
    forced_rates: tuple = ()   # empty means speedup-selected rates
    rate_set: tuple = (0.5, 0.65, 0.75, 0.85, 0.95, 1.0)
    straggler_policy: str = "slowest_one"
    rounds: int = 60
    local_epochs: int = 1
    lr: float = 0.05
    batch: int = 16
    seeds: tuple = (1, 2, 3, 4, 5)
    # calibration
    warmup: int = 3
    persistence: int = 2
    growth_factor: float = 1.25
    delta: float = 1e-8
    cadence: int = 1
    overhead_pct: float = 0.01
    fixed_th: float | None = None
    # output
    out_dir: str = "out"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        for strategy in self.strategies:
            if strategy not in STRATEGIES:
                raise ConfigError(f"unknown strategy {strategy!r}")
        for r in tuple(self.forced_rates) + tuple(self.rate_set):
            if not (0.0 < r <= 1.0):
                raise ConfigError(f"rate {r} outside (0, 1]")
        if self.rounds < self.warmup + 1:
            raise ConfigError("experiment.rounds must be at least warmup + 1")
        if not (0.0 <= self.noise_pct < 0.1):
            raise ConfigError("clients.noise_pct must lie in [0, 0.1)")
        if self.partition_mode not in (IID, LABEL_SKEW):
            raise ConfigError(f"unknown partition mode {self.partition_mode!r}")
        StragglerPolicy.parse(self.straggler_policy)
        for client in self.load_windows:
            if not (0 <= client < self.client_count):
                raise ConfigError(f"load schedule names unknown client {client}")

    def resolved_base_times(self) -> list[float]:
        """Configured per-client base epoch times, or the default spread with
        the slowest client twice as slow as the fastest."""
        if self.base_times:
            if len(self.base_times) != self.client_count:
                raise ConfigError("clients.base_times must list one time per client")
            return [float(t) for t in self.base_times]
        return list(np.linspace(1.0, 2.0, self.client_count))

    def client_specs(self) -> list[ClientSpec]:
        times = self.resolved_base_times()
        return [
            ClientSpec(c, times[c], self.noise_pct,
                       list(self.load_windows.get(c, [])))
            for c in range(self.client_count)
        ]

    def run_settings(self, strategy: str, seed: int,
                     forced_rate: float | None = None,
                     policy: str | None = None) -> RunSettings:
        return RunSettings(
            strategy=strategy,
            rounds=self.rounds,
            local_epochs=self.local_epochs,
            lr=self.lr,
            batch_size=self.batch,
            seed=seed,
            rate_set=tuple(self.rate_set),
            forced_rate=forced_rate,
            policy=StragglerPolicy.parse(policy or self.straggler_policy),
            warmup=self.warmup,
            persistence=self.persistence,
            growth_factor=self.growth_factor,
            score_delta=self.delta,
            cadence=self.cadence,
            overhead_pct=self.overhead_pct,
            fixed_threshold=self.fixed_th,
        )

    def override(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)


_SETTERS = {
    "dataset.classes": ("classes", int),
    "dataset.dims": ("dims", int),
    "dataset.per_class": ("per_class", int),
    "dataset.partition": ("partition_mode", str),
    "dataset.alpha": ("alpha", float),
    "dataset.csv": ("csv_path", str),
    "model.hidden": ("hidden", lambda v: tuple(int(x) for x in _split(v))),
    "clients.count": ("client_count", int),
    "clients.base_times": ("base_times",
                           lambda v: tuple(float(x) for x in _split(v))),
    "clients.noise_pct": ("noise_pct", float),
    "experiment.strategy": ("strategies", lambda v: tuple(_split(v))),
    "experiment.rate": ("forced_rates",
                        lambda v: tuple(float(x) for x in _split(v))),
    "experiment.rate_set": ("rate_set",
                            lambda v: tuple(float(x) for x in _split(v))),
    "experiment.straggler_policy": ("straggler_policy", str),
    "experiment.rounds": ("rounds", int),
    "experiment.local_epochs": ("local_epochs", int),
    "experiment.lr": ("lr", float),
    "experiment.batch": ("batch", int),
    "experiment.seeds": ("seeds", lambda v: tuple(int(x) for x in _split(v))),
    "calibration.warmup": ("warmup", int),
    "calibration.persistence": ("persistence", int),
    "calibration.growth_factor": ("growth_factor", float),
    "calibration.delta": ("delta", float),
    "calibration.cadence": ("cadence", int),
    "calibration.overhead_pct": ("overhead_pct", float),
    "calibration.fixed_th": ("fixed_th", float),
    "output.dir": ("out_dir", str),
}


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict = {}
    load_windows: dict[int, list[LoadWindow]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("clients.load."):
            try:
                fields = _split(value)
                if len(fields) != 4:
                    raise ValueError("expected client,start,end,slowdown")
                client = int(fields[0])
                window = LoadWindow(float(fields[1]), float(fields[2]),
                                    float(fields[3]))
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"{source}:{lineno}: field {key!r}: {exc}") from None
            load_windows.setdefault(client, []).append(window)
            continue
        if key not in _SETTERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        attr, convert = _SETTERS[key]
        try:
            values[attr] = convert(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}:{lineno}: field {key!r}: {exc}") from None
    try:
        return ExperimentConfig(load_windows=load_windows, **values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config_file(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, source=str(path))
