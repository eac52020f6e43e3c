"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .analytics import params as P


class ConfigError(ValueError):
    def __init__(self, key: str, reason: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{key}: {reason}")
        self.key = key
        self.line = line


SCENARIOS = ("Fig3", "Fig4", "LatencyVsNs", "LatencyVsM", "TpsVsM",
             "StabilityDynamic", "StabilityFixed", "Custom")
PROTOCOL_NAMES = ("PSCDSS", "CBRS", "SingleChain", "MultiChain", "CrossChain")


def _num(lo: float | None = None, hi: float | None = None, lo_open: bool = False):
    def parse(text: str) -> float:
        x = float(text)
        if not math.isfinite(x):
            raise ValueError("must be finite")
        if lo is not None and (x < lo or (lo_open and x == lo)):
            raise ValueError(f"must be {'>' if lo_open else '>='} {lo}")
        if hi is not None and x > hi:
            raise ValueError(f"must be <= {hi}")
        return x
    return parse


def _int(lo: int = 0):
    def parse(text: str) -> int:
        x = int(text)
        if x < lo:
            raise ValueError(f"must be >= {lo}")
        return x
    return parse


def _list(item: Callable[[str], Any]):
    def parse(text: str) -> tuple:
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts:
            raise ValueError("empty list")
        return tuple(item(p) for p in parts)
    return parse


def _choice(options: tuple[str, ...]):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


def _text(text: str) -> str:
    return text


# key -> (parser, default). Defaults are the common evaluation settings.
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "scenario": (_choice(SCENARIOS), "Custom"),
    "seed": (_int(0), 0),
    "trials": (_int(1), 100_000),
    "n_jobs": (_int(1), 1),
    "out": (_text, "results"),
    # channel and geometry
    "b0": (_num(0, lo_open=True), P.DEFAULT_B0),
    "m": (_num(0, lo_open=True), P.DEFAULT_M),
    "omega": (_num(0), P.DEFAULT_OMEGA),
    "fc_hz": (_num(0, lo_open=True), P.DEFAULT_FC_HZ),
    "re_km": (_num(0, lo_open=True), P.DEFAULT_RE_M / 1e3),
    "rs_km": (_num(0, lo_open=True), P.DEFAULT_RS_M / 1e3),
    "theta_min_deg": (_num(0, 90), P.DEFAULT_THETA_MIN_DEG),
    "lambda_s": (_num(0), P.DEFAULT_LAMBDA_S),
    "lambda_g": (_num(0), P.DEFAULT_LAMBDA_G),
    "gbar": (_num(0, 1), P.DEFAULT_GBAR),
    "noise_dbm_hz": (_num(), P.DEFAULT_NOISE_DBM_HZ),
    "bandwidth_hz": (_num(0, lo_open=True), 1.0),
    "pt_sat_dbw": (_num(), P.DEFAULT_PT_SAT_DBW),
    "pt_ground_dbm": (_num(), P.DEFAULT_PT_GROUND_DBM),
    "gt_sat_dbi": (_num(), P.DEFAULT_GT_SAT_DBI),
    "gr_ground_dbi": (_num(), P.DEFAULT_GR_GROUND_DBI),
    "gt_ground_dbi": (_num(), P.DEFAULT_GT_GROUND_DBI),
    "gr_sat_dbi": (_num(), P.DEFAULT_GR_SAT_DBI),
    # consensus stability
    "gamma_dl_db": (_num(), -1.0),
    "gamma_ul_db": (_num(), -1.0),
    "pout_wl": (_num(0, 1), 1.0),
    "pout_isl": (_num(0, 1), 1.0),
    "regions": (_int(1), 10),
    "ng": (_int(1), 15),
    "ns": (_int(0), 20),
    "pf_g_values": (_list(_num(0, 1)), (0.03, 0.2)),
    "pf_s_values": (_list(_num(0, 1)), tuple(round(0.05 * k, 2) for k in range(21))),
    "gamma_db_values": (_list(_num()), tuple(float(k) for k in range(-10, 11, 2))),
    "lambda_s_values": (_list(_num(0)), (1e-12, 2e-12, 3e-12, 4e-12)),
    "lambda_g_values": (_list(_num(0)), (0.8e-13, 1.6e-13, 3.2e-13, 6.4e-13)),
    "altitude_km_values": (_list(_num(0, lo_open=True)), (300.0, 500.0, 700.0, 900.0)),
    "regions_values": (_list(_int(1)), (10, 20, 30, 40, 50)),
    # network simulation
    "nr": (_int(2), 15),
    "ns_net": (_int(0), 5),
    "ns_net_values": (_list(_int(1)), (1, 2, 3, 4, 5, 6, 7, 8)),
    "m_net_values": (_list(_int(1)), (2, 3, 4, 5, 6, 7, 8)),
    "protocols": (_list(_choice(PROTOCOL_NAMES)), PROTOCOL_NAMES),
    "rounds": (_int(1), 1),
    "txs_per_round": (_int(0), 0),
    "pf_g_net": (_num(0, 1), 0.0),
    "pf_s_net": (_num(0, 1), 0.0),
    "tle_file": (_text, ""),
    "stations_file": (_text, ""),
}

# Per-scenario defaults layered over SCHEMA defaults and under user overrides.
SCENARIO_DEFAULTS: dict[str, dict[str, Any]] = {
    "Fig3": {"regions": 60, "ng": 40, "ns": 20},
    "StabilityDynamic": {"lambda_s": 2e-12},
    "StabilityFixed": {"lambda_s": 1.1258e-12, "ns": 20},
    "LatencyVsNs": {"m_net_values": (2, 4, 8), "protocols": ("PSCDSS",)},
}


@dataclass
class ExperimentConfig:
    values: dict[str, Any]
    overridden: set[str] = field(default_factory=set)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def scenario(self) -> str:
        return self.values["scenario"]

    def resolved(self) -> dict[str, Any]:
        """Scenario defaults applied under explicit overrides."""
        out = dict(self.values)
        for k, v in SCENARIO_DEFAULTS.get(self.scenario, {}).items():
            if k not in self.overridden:
                out[k] = v
        if out["rs_km"] <= out["re_km"]:
            raise ConfigError("rs_km", "must exceed re_km")
        return out


def defaults() -> dict[str, Any]:
    return {k: d for k, (_, d) in SCHEMA.items()}


def parse_value(key: str, text: str, line: int | None = None) -> Any:
    if key not in SCHEMA:
        raise ConfigError(key, "unknown key", line)
    try:
        return SCHEMA[key][0](text.strip())
    except ValueError as exc:
        raise ConfigError(key, f"invalid value {text.strip()!r} ({exc})", line) from None


def parse_config_text(text: str) -> ExperimentConfig:
    values = defaults()
    overridden: set[str] = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line.split()[0], "expected 'key = value'", line_no)
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = parse_value(key, value, line_no)
        overridden.add(key)
    return ExperimentConfig(values, overridden)


def parse_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig(defaults())
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config_text(text)


def apply_override(cfg: ExperimentConfig, key: str, text: str) -> None:
    cfg.values[key] = parse_value(key, text)
    cfg.overridden.add(key)


def format_value(v: Any) -> str:
    if isinstance(v, tuple):
        return ",".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)
