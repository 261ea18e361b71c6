"""INI-style run configuration for the command-line front end.

Sections ``[system]``, ``[pulse]``, ``[fluctuations]`` and ``[scan]`` are
all optional; keys are case-sensitive and unknown keys are rejected. A CSV
written by the CLI embeds its configuration between ``# --- config ---``
markers, and :func:`load_config` accepts such a file directly.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .core import PulseShape, SystemParams
from .errors import ConfigError
from .noise import FluctuationSpec

BEGIN = "# --- config ---"
END = "# --- end config ---"

SYSTEM_KEYS = {f.name for f in fields(SystemParams)}
PULSE_DEFAULTS = {"duration_ns": 60.0, "rise_ns": 0.0, "envelope": "rectangle"}
FLUCT_KEYS = {
    "red_power_fwhm": "red_power_fwhm",
    "blue_power_fwhm": "blue_power_fwhm",
    "detuning_fwhm_mhz": "detuning_fwhm",
    "pumping_efficiency": "pumping_efficiency",
    "recapture_factor": "recapture_factor",
    "n_trajectories": "n_trajectories",
    "seed": "seed",
}
SCAN_KEYS = ("variable", "lo", "hi", "points")
SECTIONS = ("system", "pulse", "fluctuations", "scan")


@dataclass
class RunConfig:
    system: SystemParams = field(default_factory=SystemParams)
    delta_auto: bool = True
    duration_ns: float = 60.0
    rise_ns: float = 0.0
    envelope: str = "rectangle"
    fluctuations: FluctuationSpec = field(default_factory=FluctuationSpec)
    scan: dict = field(default_factory=dict)

    def pulse(self, duration_ns=None) -> PulseShape:
        T = self.duration_ns if duration_ns is None else duration_ns
        return PulseShape(T * 1e-3, self.rise_ns * 1e-3, self.envelope)

    def with_seed(self, seed) -> "RunConfig":
        if seed is None:
            return self
        return replace(self, fluctuations=replace(self.fluctuations, seed=int(seed)))

    def to_ini(self) -> str:
        s = self.system
        lines = ["[system]"]
        for f in fields(SystemParams):
            value = getattr(s, f.name)
            if f.name == "delta_small" and self.delta_auto:
                value = "auto"
            lines.append(f"{f.name} = {value!r}" if not isinstance(value, str) else f"{f.name} = {value}")
        lines += [
            "",
            "[pulse]",
            f"duration_ns = {self.duration_ns!r}",
            f"rise_ns = {self.rise_ns!r}",
            f"envelope = {self.envelope}",
            "",
            "[fluctuations]",
        ]
        for key, attr in FLUCT_KEYS.items():
            lines.append(f"{key} = {getattr(self.fluctuations, attr)!r}")
        if self.scan:
            lines += ["", "[scan]"]
            for key in SCAN_KEYS:
                if key in self.scan:
                    value = self.scan[key]
                    lines.append(f"{key} = {value if isinstance(value, str) else repr(value)}")
        return "\n".join(lines) + "\n"


def _locate(lines, section, key=None):
    """1-based line number of a section header or of a key inside it."""
    current = None
    for n, raw in enumerate(lines, start=1):
        text = raw.strip()
        m = re.match(r"\[(.+)\]", text)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return n
            continue
        if key is not None and current == section:
            name = re.split(r"[=:]", text, maxsplit=1)[0].strip()
            if name == key:
                return n
    return None


def _extract_embedded(text):
    lines = text.splitlines()
    if BEGIN not in [l.strip() for l in lines]:
        return text, 0
    start = [l.strip() for l in lines].index(BEGIN)
    body = []
    for raw in lines[start + 1:]:
        if raw.strip() == END:
            break
        body.append(raw[2:] if raw.startswith("# ") else raw.lstrip("#"))
    return "\n".join(body) + "\n", start + 1


def parse_config(text: str) -> RunConfig:
    text, offset = _extract_embedded(text)
    lines = text.splitlines()
    cp = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), strict=True
    )
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", exc.lineno + offset) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r}", exc.lineno + offset) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno + offset) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", None if lineno is None else lineno + offset) from None

    def where(section, key=None):
        n = _locate(lines, section, key)
        return None if n is None else n + offset

    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", where(section))

    def get(section, key, convert):
        raw = cp.get(section, key)
        try:
            return convert(raw)
        except ValueError:
            raise ConfigError(f"bad value {raw!r} for {section}.{key}", where(section, key)) from None

    def check_keys(section, allowed):
        if not cp.has_section(section):
            return
        for key in cp.options(section):
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]", where(section, key))

    check_keys("system", SYSTEM_KEYS)
    check_keys("pulse", PULSE_DEFAULTS)
    check_keys("fluctuations", FLUCT_KEYS)
    check_keys("scan", SCAN_KEYS)

    cfg = RunConfig()
    try:
        if cp.has_section("system"):
            values = {}
            for key in cp.options("system"):
                if key == "delta_small" and cp.get("system", key).strip().lower() == "auto":
                    continue
                values[key] = get("system", key, float)
            cfg.delta_auto = cp.get("system", "delta_small", fallback="auto").strip().lower() == "auto"
            cfg.system = SystemParams(**values)
        if cp.has_section("pulse"):
            cfg.duration_ns = get("pulse", "duration_ns", float) if cp.has_option("pulse", "duration_ns") else 60.0
            cfg.rise_ns = get("pulse", "rise_ns", float) if cp.has_option("pulse", "rise_ns") else 0.0
            cfg.envelope = cp.get("pulse", "envelope", fallback="rectangle").strip()
            cfg.pulse()
        if cp.has_section("fluctuations"):
            values = {}
            for key in cp.options("fluctuations"):
                conv = int if key in ("n_trajectories", "seed") else float
                values[FLUCT_KEYS[key]] = get("fluctuations", key, conv)
            cfg.fluctuations = FluctuationSpec(**values)
        if cp.has_section("scan"):
            for key in cp.options("scan"):
                if key == "variable":
                    cfg.scan[key] = cp.get("scan", key).strip()
                elif key == "points":
                    cfg.scan[key] = get("scan", key, int)
                else:
                    cfg.scan[key] = get("scan", key, float)
            if cfg.scan.get("variable", "T") not in ("T", "delta"):
                raise ConfigError("scan variable must be T or delta", where("scan", "variable"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)
