"""Problem configuration: one JSON document drives every CLI subcommand."""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

from .calibrator import CalibrationConfig
from .heston import HestonParams, ReferenceKind, ReferenceSpec
from .lattice import days
from .payoffs import VixSpec
from .problem import GridConfig

MODES = ("simulated", "market")


class ConfigError(ValueError):
    pass


@dataclass
class TemplateConfig:
    """Instruments priced under the generating model in simulated mode."""
    spx_strikes: tuple = (85.0, 90.0, 95.0, 100.0, 105.0, 110.0, 115.0)
    spx_maturities_days: tuple = (44.0, 79.0)
    vix_strikes: tuple = (15.0, 20.0, 25.0, 30.0, 35.0)
    vix_future: bool = True

    def __post_init__(self):
        self.spx_strikes = tuple(float(s) for s in self.spx_strikes)
        self.spx_maturities_days = tuple(float(m) for m in self.spx_maturities_days)
        self.vix_strikes = tuple(float(s) for s in self.vix_strikes)
        if any(s <= 0 for s in self.spx_strikes + self.vix_strikes):
            raise ConfigError("template strikes must be positive")
        if any(m <= 0 for m in self.spx_maturities_days):
            raise ConfigError("template maturities must be positive")


@dataclass
class SimulationConfig:
    n_paths: int = 100_000
    seed: int = 0
    keep_paths: int = 200
    histogram_bins: int = 50

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigError("n_paths must be at least 1")
        if self.keep_paths < 0 or self.histogram_bins < 1:
            raise ConfigError("keep_paths must be nonnegative and histogram_bins positive")


def _reference_to_dict(ref):
    if ref.kind is ReferenceKind.HESTON:
        return {"kind": "heston", "heston": asdict(ref.heston)}
    if ref.kind is ReferenceKind.CONSTANT:
        return {"kind": "constant", "constants": [float(c) for c in ref.constants]}
    raise ConfigError("external references cannot be serialised")


def _reference_from_dict(d):
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("reference needs a 'kind'")
    kind = d["kind"]
    if kind == "heston":
        return ReferenceSpec(ReferenceKind.HESTON, heston=_heston(d.get("heston"), "reference.heston"))
    if kind == "constant":
        c = d.get("constants")
        if not isinstance(c, (list, tuple)) or len(c) != 3:
            raise ConfigError("reference.constants must be [b11, b12, b22]")
        try:
            return ReferenceSpec(ReferenceKind.CONSTANT, constants=tuple(float(v) for v in c))
        except ValueError as exc:
            raise ConfigError(f"reference: {exc}") from exc
    raise ConfigError(f"unknown reference kind {kind!r}")


def _heston(d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object with kappa, theta, omega, eta")
    try:
        return HestonParams(**{k: float(d[k]) for k in ("kappa", "theta", "omega", "eta")})
    except KeyError as exc:
        raise ConfigError(f"{where} is missing {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _section(cls, d, where):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class ProblemConfig:
    mode: str
    spot: float
    x2_0: float
    t0_days: float
    horizon_days: float
    reference: ReferenceSpec
    instruments: str | None = None
    generating: HestonParams | None = None
    template: TemplateConfig = field(default_factory=TemplateConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    output_dir: str = "output"
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.spot > 0:
            raise ConfigError("spot must be positive")
        if not (self.x2_0 > 0 and math.isfinite(self.x2_0)):
            raise ConfigError("x2_0 must be positive")
        if not 0 < self.t0_days < self.horizon_days:
            raise ConfigError("need 0 < t0_days < horizon_days")
        if self.mode == "simulated" and self.generating is None:
            raise ConfigError("simulated mode needs generating Heston parameters")
        if self.mode == "market" and not self.instruments:
            raise ConfigError("market mode needs an instruments file")

    @property
    def x0(self):
        return (math.log(self.spot), self.x2_0)

    @property
    def vix_spec(self):
        return VixSpec(days(self.t0_days), days(self.horizon_days))

    def resolve(self, path):
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    @property
    def instruments_path(self):
        return None if self.instruments is None else self.resolve(self.instruments)

    @property
    def output_path(self):
        return self.resolve(self.output_dir)

    def check_files(self):
        """Referenced input files must exist."""
        if self.instruments is not None and not os.path.isfile(self.instruments_path):
            raise ConfigError(f"instruments file not found: {self.instruments_path}")

    def to_dict(self):
        d = {
            "mode": self.mode,
            "spot": self.spot,
            "x2_0": self.x2_0,
            "t0_days": self.t0_days,
            "horizon_days": self.horizon_days,
            "reference": _reference_to_dict(self.reference),
            "template": {k: list(v) if isinstance(v, tuple) else v
                         for k, v in asdict(self.template).items()},
            "grid": asdict(self.grid),
            "calibration": self.calibration.to_dict(),
            "simulation": asdict(self.simulation),
            "output_dir": self.output_dir,
        }
        if self.instruments is not None:
            d["instruments"] = self.instruments
        if self.generating is not None:
            d["generating"] = asdict(self.generating)
        return d

    @classmethod
    def from_dict(cls, d, base_dir="."):
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}")
        for key in ("mode", "spot", "x2_0", "t0_days", "horizon_days", "reference"):
            if key not in d:
                raise ConfigError(f"missing required key {key!r}")
        try:
            return cls(
                mode=d["mode"], spot=float(d["spot"]), x2_0=float(d["x2_0"]),
                t0_days=float(d["t0_days"]), horizon_days=float(d["horizon_days"]),
                reference=_reference_from_dict(d["reference"]),
                instruments=d.get("instruments"),
                generating=_heston(d["generating"], "generating") if "generating" in d else None,
                template=_section(TemplateConfig, d.get("template"), "template"),
                grid=_section(GridConfig, d.get("grid"), "grid"),
                calibration=_section(CalibrationConfig, d.get("calibration"), "calibration"),
                simulation=_section(SimulationConfig, d.get("simulation"), "simulation"),
                output_dir=d.get("output_dir", "output"), base_dir=base_dir)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text, base_dir="."):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(d, base_dir)


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return ProblemConfig.from_json(text, base_dir=os.path.dirname(os.path.abspath(path)))


def save_config(config, path):
    with open(path, "w") as fh:
        fh.write(config.to_json() + "\n")


def simulated_example_config(**overrides):
    """Simulated-data setup: Heston generator (0.6, 0.09, 0.4, -0.5), Heston reference
    (0.9, 0.04, 0.6, -0.3), S0 = 100, X2_0 = 0.0098, t0 = 49d, T = 79d."""
    base = dict(
        mode="simulated", spot=100.0, x2_0=0.0098, t0_days=49.0, horizon_days=79.0,
        reference=ReferenceSpec(ReferenceKind.HESTON, heston=HestonParams(0.9, 0.04, 0.6, -0.3)),
        generating=HestonParams(0.6, 0.09, 0.4, -0.5))
    base.update(overrides)
    return ProblemConfig(**base)


CONSTANT_REFERENCE = ReferenceSpec(ReferenceKind.CONSTANT, constants=(0.09, -0.01, 0.04))
