"""
Experiment configuration in interface units and its YAML form.

Values are kept in the units a user types (MHz, µm, µK, µs, ms) so that a
config written and parsed again compares equal; the SI/kernel objects are
built on demand.
"""

from dataclasses import MISSING, asdict, dataclass, field, fields, replace
import hashlib
import json
import math

import yaml

from . import model
from .controller import FeedbackConfig
from .dynamics import DEFAULT_ZETA_HEAT, DynamicsConfig


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = ""
        if key:
            where += f"{key}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)


def _check(cond, key, message):
    if not cond:
        raise ConfigError(message, key)


@dataclass(frozen=True)
class CavitySection:
    g0_mhz: float = 16.0
    kappa_mhz: float = 1.5
    gamma_mhz: float = 3.0
    length_um: float = 260.0
    mirror_curvatures_mm: tuple = (200.0, 10.0)
    mirror_transmissions_ppm: tuple = (2.0, 16.0)
    round_trip_loss_ppm: float = 11.0
    lambda_probe_nm: float = 780.0
    lambda_trap_nm: float = 785.0

    def validate(self):
        for name in ("g0_mhz", "kappa_mhz", "gamma_mhz", "length_um", "lambda_probe_nm",
                     "lambda_trap_nm"):
            _check(getattr(self, name) > 0, f"cavity.{name}", "must be positive")
        _check(len(self.mirror_curvatures_mm) == 2, "cavity.mirror_curvatures_mm", "needs two values")
        _check(len(self.mirror_transmissions_ppm) == 2, "cavity.mirror_transmissions_ppm",
               "needs two values")
        _check(min(self.mirror_transmissions_ppm) >= 0 and self.mirror_transmissions_ppm[1] > 0,
               "cavity.mirror_transmissions_ppm", "must be >= 0 with a positive output mirror")
        _check(self.round_trip_loss_ppm >= 0, "cavity.round_trip_loss_ppm", "must be >= 0")
        try:
            self.params().waist_probe
        except model.UnstableResonatorError as exc:
            raise ConfigError(str(exc), "cavity.mirror_curvatures_mm") from exc

    def params(self):
        return model.CavityParams(
            g0=self.g0_mhz * model.MHZ,
            kappa=self.kappa_mhz * model.MHZ,
            gamma=self.gamma_mhz * model.MHZ,
            cavity_length=self.length_um * 1e-6,
            mirror_curvatures=tuple(c * 1e-3 for c in self.mirror_curvatures_mm),
            mirror_transmissions=tuple(t * 1e-6 for t in self.mirror_transmissions_ppm),
            round_trip_loss=self.round_trip_loss_ppm * 1e-6,
            lambda_probe=self.lambda_probe_nm * 1e-9,
            lambda_trap=self.lambda_trap_nm * 1e-9,
        )


@dataclass(frozen=True)
class DriveSection:
    delta_atom_mhz: float = 40.0
    delta_cavity_mhz: float = 0.0
    n_empty: float = 0.1
    eta_det: float = 0.23
    attenuation: float = 1.0
    # shift of the atomic resonance on the axis of a 950 µK trap
    light_shift_mhz: float = 10.0
    dark_rate: float = 0.0  # clicks/s

    def validate(self):
        _check(self.n_empty >= 0, "drive.n_empty", "must be >= 0")
        _check(0 <= self.eta_det <= 1, "drive.eta_det", "must lie in [0, 1]")
        _check(0 <= self.attenuation <= 1, "drive.attenuation", "must lie in [0, 1]")
        _check(self.light_shift_mhz >= 0, "drive.light_shift_mhz", "must be >= 0")
        _check(self.dark_rate >= 0, "drive.dark_rate", "must be >= 0")

    def params(self):
        return model.DriveParams(
            delta_atom=self.delta_atom_mhz * model.MHZ,
            delta_cavity=self.delta_cavity_mhz * model.MHZ,
            n_empty=self.n_empty,
            eta_det=self.eta_det,
            attenuation=self.attenuation,
            light_shift=self.light_shift_mhz * model.MHZ / 950.0,
            dark_rate=self.dark_rate,
        )


@dataclass(frozen=True)
class FeedbackSection:
    enabled: bool = True
    t_int_us: float = 13.0
    threshold: int = 3
    u_high_uk: float = 950.0
    u_low_uk: float = 400.0
    strict: bool = False

    def validate(self):
        _check(self.t_int_us > 0, "feedback.t_int_us", "must be positive")
        _check(self.t_int_us == round(self.t_int_us), "feedback.t_int_us",
               "must be a whole number of 1 µs bins")
        _check(isinstance(self.threshold, int) and self.threshold >= 1, "feedback.threshold",
               "must be an integer >= 1")
        _check(self.u_low_uk > 0, "feedback.u_low_uk", "must be positive")
        _check(self.u_high_uk > self.u_low_uk, "feedback.u_high_uk", "must exceed u_low_uk")

    def params(self):
        return FeedbackConfig(t_int=self.t_int_us, threshold=self.threshold,
                              u_high=self.u_high_uk, u_low=self.u_low_uk, strict=self.strict)


@dataclass(frozen=True)
class DynamicsSection:
    dt_us: float = 0.5
    zeta_heat: float = DEFAULT_ZETA_HEAT
    t_init_uk: float = 400.0
    escape_radius: float = 3.0

    def validate(self):
        _check(0 < self.dt_us <= 1, "dynamics.dt_us", "must lie in (0, 1]")
        _check(abs(round(1 / self.dt_us) * self.dt_us - 1) < 1e-9, "dynamics.dt_us",
               "must divide 1 µs evenly")
        _check(self.zeta_heat >= 0, "dynamics.zeta_heat", "must be >= 0")
        _check(self.t_init_uk > 0, "dynamics.t_init_uk", "must be positive")
        _check(self.escape_radius > 0, "dynamics.escape_radius", "must be positive")

    def params(self):
        return DynamicsConfig(dt=self.dt_us, zeta_heat=self.zeta_heat, t_init=self.t_init_uk,
                              escape_radius=self.escape_radius)


@dataclass(frozen=True)
class StorageSection:
    duration_ms: float = 500.0
    bin_ms: float = 2.0

    def validate(self):
        _check(self.duration_ms > 0, "storage.duration_ms", "must be positive")
        _check(0 < self.bin_ms <= self.duration_ms / 3, "storage.bin_ms",
               "must be positive and give at least 3 time points")


@dataclass(frozen=True)
class ScanSection:
    attenuation: tuple = (1.0, 0.5, 0.25)
    n_empty: tuple = (0.025, 0.05, 0.1, 0.2, 0.4, 0.8)
    duration_ms: float = 1000.0

    def validate(self):
        _check(len(self.attenuation) > 0, "scan.attenuation", "must not be empty")
        _check(all(0 <= a <= 1 for a in self.attenuation), "scan.attenuation",
               "values must lie in [0, 1]")
        _check(len(self.n_empty) > 0, "scan.n_empty", "must not be empty")
        _check(all(n >= 0 for n in self.n_empty), "scan.n_empty", "values must be >= 0")
        _check(self.duration_ms > 0, "scan.duration_ms", "must be positive")


@dataclass(frozen=True)
class CalibrationSection:
    target_ms: float = 35.0
    tolerance: float = 0.05  # relative
    zeta_lo: float = 0.01
    zeta_hi: float = 10.0
    max_iter: int = 20
    duration_ms: float = 300.0

    def validate(self):
        _check(self.target_ms > 0, "calibration.target_ms", "must be positive")
        _check(0 < self.tolerance < 1, "calibration.tolerance", "must lie in (0, 1)")
        _check(0 < self.zeta_lo < self.zeta_hi, "calibration.zeta_lo",
               "need 0 < zeta_lo < zeta_hi")
        _check(isinstance(self.max_iter, int) and self.max_iter >= 1, "calibration.max_iter",
               "must be an integer >= 1")
        _check(self.duration_ms > 0, "calibration.duration_ms", "must be positive")


@dataclass(frozen=True)
class ThermometrySection:
    hold_ms: float = 10.0
    u_start_uk: float = 950.0
    u_end_uk: float = 100.0
    ramp_ms: float = 4.0
    # time at the final depth for atoms unbound during the ramp to fly out
    tail_ms: float = 3.0

    def validate(self):
        _check(self.hold_ms >= 0, "thermometry.hold_ms", "must be >= 0")
        _check(self.tail_ms >= 0, "thermometry.tail_ms", "must be >= 0")
        _check(self.u_start_uk > self.u_end_uk > 0, "thermometry.u_end_uk",
               "need u_start_uk > u_end_uk > 0")
        _check(self.ramp_ms > 0, "thermometry.ramp_ms", "must be positive")


@dataclass(frozen=True)
class ToggleSection:
    phase_ms: float = 5.0
    cycles: int = 6
    selection: float = 0.5
    block_us: int = 100

    def validate(self):
        _check(self.phase_ms > 0, "toggle.phase_ms", "must be positive")
        _check(isinstance(self.cycles, int) and self.cycles >= 1, "toggle.cycles",
               "must be an integer >= 1")
        _check(0 < self.selection <= 1, "toggle.selection", "must lie in (0, 1]")
        _check(isinstance(self.block_us, int) and self.block_us >= 1, "toggle.block_us",
               "must be an integer >= 1")
        _check(round(self.phase_ms * 1000) % self.block_us == 0, "toggle.block_us",
               "must divide the phase length")


@dataclass(frozen=True)
class CorrelationSection:
    duration_ms: float = 20.0
    interval_us: int = 2000
    tau_max_us: int = 600
    selection: float = 0.8
    t_int_us: tuple = (32.0, 16.0)
    bump_window_us: tuple = (60.0, 450.0)

    def validate(self):
        _check(self.duration_ms * 1000 >= self.interval_us, "correlation.duration_ms",
               "must hold at least one interval")
        _check(isinstance(self.interval_us, int) and self.interval_us > 1,
               "correlation.interval_us", "must be an integer > 1")
        _check(isinstance(self.tau_max_us, int) and 0 < self.tau_max_us < self.interval_us,
               "correlation.tau_max_us", "must be an integer in (0, interval_us)")
        _check(0 < self.selection <= 1, "correlation.selection", "must lie in (0, 1]")
        _check(len(self.t_int_us) > 0 and all(t > 0 and t == round(t) for t in self.t_int_us),
               "correlation.t_int_us", "must be whole numbers of µs")
        lo, hi = self.bump_window_us
        _check(0 <= lo < hi <= self.tau_max_us, "correlation.bump_window_us",
               "must be an increasing pair within tau_max_us")


@dataclass(frozen=True)
class OutputSection:
    # what the trajectory archive stores: "summary" (seeds and escape times)
    # or "full" (plus bins, window counts and trap history when recorded)
    archive: str = "full"

    def validate(self):
        _check(self.archive in ("summary", "full"), "output.archive",
               "must be 'summary' or 'full'")


@dataclass(frozen=True)
class ExperimentConfig:
    n_atoms: int = 200
    master_seed: int = 0
    first_atom: int = 0
    cavity: CavitySection = field(default_factory=CavitySection)
    drive: DriveSection = field(default_factory=DriveSection)
    feedback: FeedbackSection = field(default_factory=FeedbackSection)
    dynamics: DynamicsSection = field(default_factory=DynamicsSection)
    storage: StorageSection = field(default_factory=StorageSection)
    scan: ScanSection = field(default_factory=ScanSection)
    calibration: CalibrationSection = field(default_factory=CalibrationSection)
    thermometry: ThermometrySection = field(default_factory=ThermometrySection)
    toggle: ToggleSection = field(default_factory=ToggleSection)
    correlation: CorrelationSection = field(default_factory=CorrelationSection)
    output: OutputSection = field(default_factory=OutputSection)

    def __post_init__(self):
        self.validate()

    def validate(self):
        _check(isinstance(self.n_atoms, int) and self.n_atoms >= 1, "n_atoms",
               "must be an integer >= 1")
        _check(isinstance(self.master_seed, int) and self.master_seed >= 0, "master_seed",
               "must be a non-negative integer")
        _check(isinstance(self.first_atom, int) and self.first_atom >= 0, "first_atom",
               "must be a non-negative integer")
        for f in fields(self):
            sub = getattr(self, f.name)
            if hasattr(sub, "validate"):
                sub.validate()

    # convenience accessors for the model objects
    @property
    def cavity_params(self):
        return self.cavity.params()

    @property
    def drive_params(self):
        return self.drive.params()

    @property
    def feedback_params(self):
        return self.feedback.params()

    @property
    def dynamics_params(self):
        return self.dynamics.params()

    def with_values(self, **changes):
        """Copy with dotted-path overrides, e.g. ``with_values(**{"drive.n_empty": 0.2})``."""
        data = to_dict(self)
        for path, value in changes.items():
            node = data
            *parents, leaf = path.split(".")
            for p in parents:
                node = node[p]
            if leaf not in node:
                raise ConfigError("unknown key", path)
            node[leaf] = value
        return from_dict(data)

    def hash(self, ensemble=False):
        """SHA-256 of the canonical JSON form.

        ``ensemble=True`` leaves out the atom range so that partial runs of
        one ensemble share a key and can be merged.
        """
        data = to_dict(self)
        if ensemble:
            data.pop("n_atoms")
            data.pop("first_atom")
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_SECTIONS = {f.name: f.default_factory for f in fields(ExperimentConfig)
             if f.default_factory is not MISSING}


def to_dict(cfg):
    data = asdict(cfg)
    for name in _SECTIONS:
        for key, value in data[name].items():
            if isinstance(value, tuple):
                data[name][key] = list(value)
    return data


def _coerce(section_cls, name, key, value, line):
    default = getattr(section_cls(), key)
    path = f"{name}.{key}" if name else key
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", path, line)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError("expected an integer", path, line)
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("expected a number", path, line)
        if not math.isfinite(value):
            raise ConfigError("must be finite", path, line)
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError("expected a list", path, line)
        out = []
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError("expected a list of numbers", path, line)
            out.append(float(v))
        return tuple(out)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError("expected a string", path, line)
        return value
    return value


def from_dict(data, lines=None):
    """Build and validate a config from plain data; unknown keys are errors."""
    lines = lines or {}
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    top, sections = {}, {}
    top_defaults = ExperimentConfig.__dataclass_fields__
    for key, value in data.items():
        line = lines.get(key)
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            if value is None:
                value = {}
            if not isinstance(value, dict):
                raise ConfigError("expected a mapping", key, line)
            known = {f.name for f in fields(cls)}
            kw = {}
            for k, v in value.items():
                sub_line = lines.get(f"{key}.{k}")
                if k not in known:
                    raise ConfigError("unknown key", f"{key}.{k}", sub_line)
                kw[k] = _coerce(cls, key, k, v, sub_line)
            sections[key] = kw
        elif key in top_defaults:
            top[key] = _coerce(ExperimentConfig, "", key, value, line)
        else:
            raise ConfigError("unknown key", key, line)
    try:
        built = {name: replace(_SECTIONS[name](), **sections.get(name, {})) for name in _SECTIONS}
        return ExperimentConfig(**top, **built)
    except ConfigError as exc:
        if exc.line is None and exc.key is not None:
            line = lines.get(exc.key)
            if line is not None:
                raise ConfigError(str(exc).split(": ", 1)[-1], exc.key, line) from None
        raise


def _key_lines(node, prefix="", out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}{k.value}"
            out[key] = k.start_mark.line + 1
            if isinstance(v, yaml.MappingNode):
                _key_lines(v, key + ".", out)
    return out


def loads(text):
    """Parse YAML text into a validated ExperimentConfig."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"malformed YAML ({getattr(exc, 'problem', exc)})", line=line) from exc
    return from_dict(data, _key_lines(node) if node is not None else {})


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path} ({exc.strerror})") from exc
    return loads(text)


def dumps(cfg):
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=False)


def dump(cfg, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(cfg))
