"""Run configuration: schema, loading (TOML or JSON), profiles and diagnostics.

A config file names one pipeline, a trap preset, a seed and an output
directory, plus an optional parameter block for the pipeline.  Lengths are
in micrometres, times in the unit carried by the key suffix.
"""
from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Literal, Optional

import tomli
from scipy.constants import atomic_mass
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .phys import PRESETS, TrapParams, preset as make_preset

PIPELINES = ("holo", "flicker", "transport", "halfloss", "thermo", "lifetime")
PROFILES = ("smoke", "paper")
SMOKE_TRIALS = 50
SMOKE_GRID = 128


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TrapOverrides(_Strict):
    depth_mK: Optional[float] = Field(None, gt=0)
    waist_um: Optional[float] = Field(None, gt=0)
    wavelength_nm: Optional[float] = Field(None, gt=0)
    mass_amu: Optional[float] = Field(None, gt=0)
    axial_form: Literal["squared", "as-printed"] = "squared"


class _Geometry(_Strict):
    """Spot layout shared by the hologram pipelines."""
    pattern: Literal["triangle", "array", "file"] = "triangle"
    pattern_file: Optional[str] = None
    side_um: float = Field(4.0, gt=0)
    mover_offset_um: float = Field(3.0, gt=0)
    n_spots: int = Field(4, ge=1, le=64)
    spacing_um: float = Field(2.0, gt=0)
    step_um: float = 1.0
    n_frames: int = Field(11, ge=1)
    path_file: Optional[str] = None
    grid: int = Field(512, ge=16)
    pad_factor: int = Field(2, ge=1)
    gain: float = Field(0.8, ge=0, lt=1)
    max_iters: int = Field(50, ge=1)
    convergence_tol: float = Field(0.01, gt=0)
    illumination_radius: float = Field(0.35, gt=0)

    @field_validator("grid")
    @classmethod
    def _pow2(cls, v):
        if v & (v - 1):
            raise ValueError("grid must be a power of two")
        return v

    @model_validator(mode="after")
    def _files(self):
        if self.pattern == "file" and not self.pattern_file:
            raise ValueError("pattern = 'file' requires pattern_file")
        return self


class HoloParams(_Geometry):
    alpha: Optional[float] = Field(None, ge=0, le=1)
    induction: bool = True
    blaze_period_px: Optional[float] = Field(8.0, gt=0)
    blaze_orientation_deg: float = 0.0


class FlickerParams(_Geometry):
    alphas: list[float] = Field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    response_time_ms: float = Field(120.0, gt=0)
    n_samples: int = Field(41, ge=3)
    n_frames: int = Field(2, ge=2)

    @field_validator("alphas")
    @classmethod
    def _alphas(cls, v):
        if not v or any(not 0 <= a <= 1 for a in v):
            raise ValueError("alphas must be a non-empty list of values in [0, 1]")
        return v


class _Atoms(_Strict):
    temperature_uK: float = Field(15.0, gt=0)
    n_trials: int = Field(250, ge=1)
    dt_ns: Optional[float] = Field(None, gt=0)
    settle_ms: float = Field(0.2, ge=0)


class TransportParams(_Atoms):
    step_sizes_um: list[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0, 1.6])
    switch_time_ms: float = Field(10.0, ge=0)

    @field_validator("step_sizes_um")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("step_sizes_um must not be empty")
        return v


class HalflossParams(_Atoms):
    n_trials: int = Field(500, ge=1)
    switch_times_ms: list[float] = Field(default_factory=lambda: [0.0, 0.1, 1.0, 10.0])
    tol: float = Field(0.02, gt=0, lt=0.5)

    @field_validator("switch_times_ms")
    @classmethod
    def _times(cls, v):
        if not v or any(t < 0 for t in v):
            raise ValueError("switch_times_ms must be a non-empty list of values >= 0")
        return v


class LifetimeParams(_Atoms):
    n_steps: int = Field(10, ge=1)
    step_um: float = 1.0
    switch_time_ms: float = Field(10.0, ge=0)


class ThermoParams(_Strict):
    temperatures_uK: list[float] = Field(default_factory=lambda: [15.0, 60.0])
    hold_times_s: Optional[list[float]] = None
    taus_us: list[float] = Field(default_factory=lambda: [float(5 * i) for i in range(17)])
    n_trials: int = Field(2000, ge=1)
    n_model: int = Field(20000, ge=100)
    n_bootstrap: int = Field(100, ge=0)
    gravity: bool = False

    @model_validator(mode="after")
    def _shapes(self):
        if not self.temperatures_uK or any(t <= 0 for t in self.temperatures_uK):
            raise ValueError("temperatures_uK must be a non-empty list of positive values")
        if self.hold_times_s is not None and len(self.hold_times_s) != len(self.temperatures_uK):
            raise ValueError("hold_times_s must have one entry per temperature")
        if any(b <= a for a, b in zip(self.taus_us, self.taus_us[1:])) or any(t < 0 for t in self.taus_us):
            raise ValueError("taus_us must be >= 0 and strictly increasing")
        return self


BLOCKS = {"holo": HoloParams, "flicker": FlickerParams, "transport": TransportParams,
          "halfloss": HalflossParams, "thermo": ThermoParams, "lifetime": LifetimeParams}


class RunConfig(_Strict):
    pipeline: Literal["holo", "flicker", "transport", "halfloss", "thermo", "lifetime"]
    seed: int = Field(ge=0)
    preset: str = "paper-rb87"
    output_dir: str = "out"
    profile: Literal["smoke", "paper"] = "paper"
    trap: TrapOverrides = TrapOverrides()
    holo: Optional[HoloParams] = None
    flicker: Optional[FlickerParams] = None
    transport: Optional[TransportParams] = None
    halfloss: Optional[HalflossParams] = None
    thermo: Optional[ThermoParams] = None
    lifetime: Optional[LifetimeParams] = None

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, v):
        if v not in PRESETS:
            raise ValueError(f"unknown preset {v!r}; known: {sorted(PRESETS)}")
        return v

    @property
    def params(self):
        """The active pipeline's block (defaults when omitted)."""
        block = getattr(self, self.pipeline)
        return block if block is not None else BLOCKS[self.pipeline]()

    def trap_params(self) -> TrapParams:
        base = make_preset(self.preset, self.trap.axial_form)
        t = self.trap
        return TrapParams.from_mK(
            t.depth_mK if t.depth_mK is not None else base.depth_mK,
            t.waist_um * 1e-6 if t.waist_um is not None else base.waist,
            t.wavelength_nm * 1e-9 if t.wavelength_nm is not None else base.wavelength,
            t.mass_amu * atomic_mass if t.mass_amu is not None else base.mass,
            t.axial_form,
        )

    def canonical(self) -> dict:
        """Effective settings that determine the outputs (output_dir excluded)."""
        d = self.model_dump(mode="json", exclude={"output_dir"})
        for name in PIPELINES:
            d.pop(name, None)
        d["params"] = self.params.model_dump(mode="json")
        return d

    def config_hash(self) -> str:
        from .io import sha256_hex
        return sha256_hex(json.dumps(self.canonical(), sort_keys=True, separators=(",", ":")))


def apply_profile(cfg: RunConfig, profile: str | None = None) -> RunConfig:
    """Return ``cfg`` with the smoke caps applied when the profile is ``smoke``."""
    profile = profile or cfg.profile
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}", [{"loc": "profile", "msg": f"must be one of {PROFILES}"}])
    block = cfg.params
    if profile == "smoke":
        caps = {}
        fields = type(block).model_fields
        if "n_trials" in fields:
            caps["n_trials"] = min(block.n_trials, SMOKE_TRIALS)
        if "grid" in fields:
            caps["grid"] = min(block.grid, SMOKE_GRID)
        if "n_model" in fields:
            caps["n_model"] = min(block.n_model, 2000)
            caps["n_bootstrap"] = min(block.n_bootstrap, 10)
        if "alphas" in fields and len(block.alphas) > 5:
            caps["alphas"] = [0.0, 0.25, 0.5, 0.75, 1.0]
            caps["n_samples"] = min(block.n_samples, 11)
        if "n_frames" in fields and isinstance(block, HoloParams):
            caps["n_frames"] = min(block.n_frames, 11)
        if "n_steps" in fields:
            caps["n_steps"] = min(block.n_steps, 5)
        block = block.model_copy(update=caps)
    return cfg.model_copy(update={"profile": profile, cfg.pipeline: block})


# --- loading and diagnostics --------------------------------------------

def _locate(text: str, loc: tuple, is_toml: bool) -> int | None:
    """Best-effort 1-based line number of the key addressed by a validation ``loc``."""
    keys = [str(k) for k in loc if not isinstance(k, int)]
    if not keys:
        return None
    lines = text.splitlines()
    if is_toml:
        section, target = ".".join(keys[:-1]), keys[-1]
        current = ""
        for i, line in enumerate(lines, 1):
            m = re.match(r"\s*\[([^\]]+)\]", line)
            if m:
                current = m.group(1).strip()
                if current == ".".join(keys):
                    return i
                continue
            if current == section and re.match(rf"\s*{re.escape(target)}\s*=", line):
                return i
        return None
    start = 0
    hit = None
    for k in keys:
        pat = re.compile(rf'"{re.escape(k)}"\s*:')
        for i in range(start, len(lines)):
            if pat.search(lines[i]):
                hit, start = i + 1, i + 1
                break
        else:
            return hit
    return hit


def _issues(exc: ValidationError, text: str | None, is_toml: bool) -> list[dict]:
    out = []
    for e in exc.errors():
        loc = tuple(x for x in e["loc"] if not (isinstance(x, str) and x.startswith("function-after")))
        item = {"loc": ".".join(str(x) for x in loc) or "<root>", "msg": e["msg"], "type": e["type"]}
        if text is not None:
            line = _locate(text, loc, is_toml)
            if line is not None:
                item["line"] = line
        out.append(item)
    return out


def parse_text(text: str, fmt: str) -> dict:
    if fmt == "toml":
        try:
            return tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            issue = {"loc": "<file>", "msg": str(exc), "type": "toml_syntax"}
            if m:
                issue["line"] = int(m.group(1))
            raise ConfigError("config is not valid TOML", [issue]) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config is not valid JSON",
                          [{"loc": "<file>", "msg": exc.msg, "type": "json_syntax", "line": exc.lineno}]) from exc


def build_config(data: dict, text: str | None = None, fmt: str = "toml") -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        issues = _issues(exc, text, fmt == "toml")
        raise ConfigError(f"{len(issues)} config error(s)", issues) from exc


def read_config(path, overrides: dict | None = None) -> RunConfig:
    """Load a ``.toml`` or ``.json`` config; ``overrides`` replace top-level keys before validation."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    fmt = "json" if path.suffix.lower() == ".json" else "toml"
    data = parse_text(text, fmt)
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table/object", [{"loc": "<root>", "msg": "not a mapping"}])
    for k, v in (overrides or {}).items():
        if v is not None:
            if k == "pipeline" and "pipeline" in data and data["pipeline"] != v:
                raise ConfigError(f"config pipeline {data['pipeline']!r} does not match subcommand {v!r}",
                                  [{"loc": "pipeline", "msg": "mismatch with subcommand",
                                    "line": _locate(text, ("pipeline",), fmt == "toml")}])
            data[k] = v
    return build_config(data, text, fmt)


def validate_file(path) -> dict:
    """Full schema check without side effects; returns ``{"status": "ok"|"error", ...}``."""
    try:
        cfg = read_config(path)
    except ConfigError as exc:
        return {"status": "error", "message": str(exc), "issues": exc.issues}
    return {"status": "ok", "pipeline": cfg.pipeline, "config_hash": cfg.config_hash()}
