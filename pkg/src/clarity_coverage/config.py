"""Scenario configuration stored as sectioned INI text.

Example::

    [domain]
    length_x_km = 3.0
    length_y_km = 1.5
    spacing_km = 0.1

    [field]
    components = x, y
    sigma_t_sq = 0.0005

    [kernel]
    family = matern12
    sigma = 3.49
    length_scale_km = 0.944
    noise_var = 0.25

    [fleet]
    n_agents = 3
    u_max = 30.0

    [mission]
    dt = 5.0
    horizon = 600.0
    q_target = 0.8
    seed = 0

    [controller]
    policy = indirect

A ``[kernel.<component>]`` section overrides kernel keys for one component.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import POLICIES
from .kernels import KernelParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    length_x: float = 3.0
    length_y: float = 1.5
    spacing: float = 0.1
    components: tuple[str, ...] = ("x", "y")
    kernel: KernelParams = KernelParams("matern12", 3.49, 0.944, 0.25)
    kernel_overrides: tuple[tuple[str, KernelParams], ...] = ()
    sigma_t_sq: float = 5e-4
    sigma_t_sq_file: str | None = None
    prior_mean: float = 0.0
    truth: str = "gp"
    truth_file: str | None = None
    truth_refine: int = 2
    n_agents: int = 3
    u_max: float = 30.0
    start_positions: tuple[tuple[float, float], ...] | None = None
    dt: float = 5.0
    horizon: float = 600.0
    q_target: float = 0.8
    seed: int = 0
    snapshot_every: int = 12
    policy: str = "indirect"
    modes: int = 16
    tau_max: float = 3600.0
    eps_scale: float = 1e-9
    smoothing: float | None = None
    n_keep: int | None = None

    def __post_init__(self):
        if self.length_x <= 0 or self.length_y <= 0 or self.spacing <= 0:
            raise ConfigError("domain lengths and spacing must be positive")
        if self.dt <= 0 or self.horizon < 0:
            raise ConfigError("dt must be positive and horizon non-negative")
        steps = self.horizon / self.dt
        if not np.isclose(steps, round(steps)):
            raise ConfigError("horizon must be a multiple of dt")
        if self.n_agents < 0:
            raise ConfigError("n_agents must be non-negative")
        if not 0 <= self.q_target < 1:
            raise ConfigError("q_target must lie in [0, 1)")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown controller {self.policy!r}")
        if self.truth not in ("gp", "csv"):
            raise ConfigError("truth must be 'gp' or 'csv'")
        if self.truth == "csv" and not self.truth_file:
            raise ConfigError("truth = csv needs truth_file")
        if self.start_positions is not None:
            if len(self.start_positions) != self.n_agents:
                raise ConfigError("start_positions must list one position per agent")
            for x, y in self.start_positions:
                if not (0 <= x <= self.length_x and 0 <= y <= self.length_y):
                    raise ConfigError(f"start position ({x}, {y}) outside the domain")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def kernel_for(self, component: str) -> KernelParams:
        return dict(self.kernel_overrides).get(component, self.kernel)

    def starts(self) -> np.ndarray:
        if self.start_positions is not None:
            return np.array(self.start_positions, dtype=float).reshape(-1, 2)
        # evenly spaced along the southern edge, on the first row of cell centres
        xs = (np.arange(self.n_agents) + 0.5) * self.length_x / max(self.n_agents, 1)
        return np.column_stack([xs, np.full(self.n_agents, 0.5 * self.spacing)])

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# INI (de)serialization

_KEYS = {
    # (section, key): (attribute, parser)
    ("domain", "length_x_km"): ("length_x", float),
    ("domain", "length_y_km"): ("length_y", float),
    ("domain", "spacing_km"): ("spacing", float),
    ("field", "sigma_t_sq"): ("sigma_t_sq", float),
    ("field", "sigma_t_sq_file"): ("sigma_t_sq_file", str),
    ("field", "prior_mean"): ("prior_mean", float),
    ("field", "truth"): ("truth", str),
    ("field", "truth_file"): ("truth_file", str),
    ("field", "truth_refine"): ("truth_refine", int),
    ("fleet", "n_agents"): ("n_agents", int),
    ("fleet", "u_max"): ("u_max", float),
    ("mission", "dt"): ("dt", float),
    ("mission", "horizon"): ("horizon", float),
    ("mission", "q_target"): ("q_target", float),
    ("mission", "seed"): ("seed", int),
    ("mission", "snapshot_every"): ("snapshot_every", int),
    ("controller", "policy"): ("policy", str),
    ("controller", "modes"): ("modes", int),
    ("controller", "tau_max"): ("tau_max", float),
    ("controller", "eps_scale"): ("eps_scale", float),
    ("controller", "smoothing_km"): ("smoothing", float),
    ("controller", "n_keep"): ("n_keep", int),
}
_KERNEL_KEYS = {"family": str, "sigma": float, "length_scale_km": float, "noise_var": float}


def _kernel_from_section(sec, base: KernelParams | None) -> KernelParams:
    vals = {
        "family": base.family.value if base else None,
        "sigma": base.sigma if base else None,
        "length_scale_km": base.length_scale if base else None,
        "noise_var": base.noise_var if base else 0.0,
    }
    for key in sec:
        if key not in _KERNEL_KEYS:
            raise ConfigError(f"unknown kernel key {key!r}")
        vals[key] = _KERNEL_KEYS[key](sec[key])
    if any(v is None for v in vals.values()):
        raise ConfigError("kernel section needs family, sigma and length_scale_km")
    return KernelParams(vals["family"], vals["sigma"], vals["length_scale_km"], vals["noise_var"])


def parse_config(text: str) -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    kw = {}
    for section in cp.sections():
        if section == "kernel" or section.startswith("kernel."):
            continue
        for key, raw in cp[section].items():
            if key == "components" and section == "field":
                kw["components"] = tuple(c.strip() for c in raw.split(",") if c.strip())
                continue
            if key == "start_positions" and section == "fleet":
                kw["start_positions"] = _parse_positions(raw)
                continue
            if (section, key) not in _KEYS:
                raise ConfigError(f"unknown config key [{section}] {key}")
            attr, conv = _KEYS[(section, key)]
            raw = raw.strip()
            try:
                kw[attr] = None if raw in ("", "none") else conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc
    try:
        if cp.has_section("kernel"):
            kw["kernel"] = _kernel_from_section(cp["kernel"], None)
        base = kw.get("kernel", ScenarioConfig.kernel)
        overrides = []
        for section in cp.sections():
            if section.startswith("kernel."):
                overrides.append((section.split(".", 1)[1], _kernel_from_section(cp[section], base)))
        if overrides:
            kw["kernel_overrides"] = tuple(overrides)
        return ScenarioConfig(**kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _parse_positions(raw: str):
    out = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        x, y = (float(v) for v in chunk.replace(",", " ").split())
        out.append((x, y))
    return tuple(out)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(cfg: ScenarioConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    sections: dict[str, dict[str, str]] = {}
    for (section, key), (attr, _) in _KEYS.items():
        sections.setdefault(section, {})[key] = _fmt(getattr(cfg, attr))
    sections["field"]["components"] = ", ".join(cfg.components)
    if cfg.start_positions is not None:
        sections["fleet"]["start_positions"] = "; ".join(f"{x!r} {y!r}" for x, y in cfg.start_positions)
    sections["kernel"] = _kernel_dict(cfg.kernel)
    for name, kp in cfg.kernel_overrides:
        sections[f"kernel.{name}"] = _kernel_dict(kp)
    for name in ("domain", "field", "kernel", "fleet", "mission", "controller"):
        cp[name] = sections.pop(name)
    for name, body in sections.items():
        cp[name] = body
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _kernel_dict(kp: KernelParams) -> dict[str, str]:
    return {
        "family": kp.family.value,
        "sigma": repr(float(kp.sigma)),
        "length_scale_km": repr(float(kp.length_scale)),
        "noise_var": repr(float(kp.noise_var)),
    }


def load_config(path) -> ScenarioConfig:
    return parse_config(Path(path).read_text())


def save_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(format_config(cfg))
