"""Run configuration: dotted-key text files with typed defaults.

A config file holds one ``section.key = value`` assignment per line
(``#`` comments and blank lines allowed).  Every key has a default below;
unknown keys and badly typed values raise ConfigError with the offending
key path so failures are actionable.
"""

from __future__ import annotations

from .calib import SearchGrid
from .circuit import NoiseConfig, TrotterSchedule
from .heom import BathParams, HeomConfig
from .qdyn import SystemParams


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, object] = {
    "system.epsilon": 1.5,
    "system.j": 1.0,
    "bath.lambda": 0.5,
    "bath.gamma": 11.0,
    "bath.kT": 1.0,
    "noise.depol1": 0.002,
    "noise.depol2": 0.002,
    "noise.overrotation": 0.0,
    "noise.readout": 0.0,
    "run.delta_q": 200.0,
    "run.t_max": 6.0,
    "run.n_points": 61,
    "run.shots": 8192,
    "run.seed": 1234,
    "run.mode": "exact",  # exact | shots
    "trotter.mode": "linear",  # linear | constant
    "trotter.dt_target": 0.4,
    "trotter.m_const": 10,
    "heom.depth": 6,
    "heom.matsubara": 3,
    "heom.rel_tol": 1e-8,
    "heom.abs_tol": 1e-10,
    "heom.terminator": True,
    "ttm.train_t0": 0.1,
    "ttm.train_dt": 0.05,
    "ttm.train_n": 68,
    "ttm.extend_t_max": 9.0,
    "calib.lambda_min": 0.05,
    "calib.lambda_max": 2.0,
    "calib.lambda_points": 8,
    "calib.j_min": 0.5,
    "calib.j_max": 1.5,
    "calib.j_points": 8,
    "calib.delta_list": "100,200,300,400",
    "calib.t_max": 3.0,
    "calib.n_points": 31,
    "calib.heom_depth": 5,
    "calib.heom_matsubara": 3,
    "calib.heom_rel_tol": 1e-6,
    "calib.heom_abs_tol": 1e-8,
    "scan.kind": "XZXZZsq",
    "scan.reps": 100,
    "scan.theta": 1.5707963267948966,
    "scan.phi": 0.0,
}


def _coerce(key: str, raw: str) -> object:
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError("expected a boolean")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key '{key}': cannot parse {raw!r}: {exc}") \
            from None


class RunConfig:
    """Typed view over the flat dotted-key dictionary."""

    def __init__(self, values: dict[str, object] | None = None):
        self.values = dict(DEFAULTS)
        for key, val in (values or {}).items():
            self.set(key, val)
        self._validate()

    def set(self, key: str, value: object) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key '{key}'")
        if isinstance(value, str) and not isinstance(DEFAULTS[key], str):
            value = _coerce(key, value)
        self.values[key] = value

    def _validate(self) -> None:
        # constructing the typed objects enforces their invariants
        for name, build in (("system", self.system_params),
                            ("noise", self.noise_config),
                            ("trotter", self.trotter_schedule),
                            ("bath", self.bath_params),
                            ("heom", self.heom_config)):
            try:
                build()
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"config section '{name}': {exc}") from None

    @classmethod
    def from_file(cls, path: str, overrides: dict[str, str] | None = None
                  ) -> "RunConfig":
        values: dict[str, object] = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(
                        f"{path}:{lineno}: expected 'key = value', got {line!r}")
                key, raw = (part.strip() for part in line.split("=", 1))
                if key not in DEFAULTS:
                    raise ConfigError(f"{path}:{lineno}: unknown config key '{key}'")
                values[key] = _coerce(key, raw)
        for key, raw in (overrides or {}).items():
            if key not in DEFAULTS:
                raise ConfigError(f"override: unknown config key '{key}'")
            values[key] = _coerce(key, raw)
        return cls(values)

    def __getitem__(self, key: str):
        return self.values[key]

    def system_params(self) -> SystemParams:
        return SystemParams(epsilon=self.values["system.epsilon"],
                            j_coupling=self.values["system.j"])

    def noise_config(self) -> NoiseConfig:
        return NoiseConfig(depol_1q=self.values["noise.depol1"],
                           depol_2q=self.values["noise.depol2"],
                           overrotation_x=self.values["noise.overrotation"],
                           readout_flip=self.values["noise.readout"])

    def trotter_schedule(self) -> TrotterSchedule:
        return TrotterSchedule(mode=self.values["trotter.mode"],
                               m_const=self.values["trotter.m_const"],
                               dt_target=self.values["trotter.dt_target"])

    def bath_params(self) -> BathParams:
        return BathParams(lam=self.values["bath.lambda"],
                          gamma=self.values["bath.gamma"],
                          kT=self.values["bath.kT"])

    def heom_config(self) -> HeomConfig:
        return HeomConfig(depth=self.values["heom.depth"],
                          matsubara=self.values["heom.matsubara"],
                          rel_tol=self.values["heom.rel_tol"],
                          abs_tol=self.values["heom.abs_tol"],
                          terminator=self.values["heom.terminator"])

    def calib_heom_config(self) -> HeomConfig:
        return HeomConfig(depth=self.values["calib.heom_depth"],
                          matsubara=self.values["calib.heom_matsubara"],
                          rel_tol=self.values["calib.heom_rel_tol"],
                          abs_tol=self.values["calib.heom_abs_tol"])

    def search_grid(self) -> SearchGrid:
        return SearchGrid(lambda_min=self.values["calib.lambda_min"],
                          lambda_max=self.values["calib.lambda_max"],
                          lambda_points=self.values["calib.lambda_points"],
                          j_min=self.values["calib.j_min"],
                          j_max=self.values["calib.j_max"],
                          j_points=self.values["calib.j_points"])

    def delta_list(self) -> list[float]:
        raw = str(self.values["calib.delta_list"])
        try:
            return [float(part) for part in raw.split(",") if part.strip()]
        except ValueError:
            raise ConfigError(
                f"config key 'calib.delta_list': cannot parse {raw!r}") from None
