"""Command-line experiment runner writing CSV tables and a run manifest."""

from __future__ import annotations

import argparse
import csv
import json
import math
import subprocess
import sys
import time
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .analytics.outage import db, outage_probability
from .analytics.params import Direction, GeometryParams, LinkBudget, downlink_budget, gamma_params, uplink_budget
from .analytics.stability import compose_fault_probs, ps_closed_form, ps_semi_analytic
from .config import ConfigError, ExperimentConfig, apply_override, format_value, parse_config
from .montecarlo import estimate_ps_empirical, estimate_ps_end_to_end, simulate_link_outage
from .netsim import Workload, build_topology, measure_tps, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
MANIFEST = "manifest.json"

Row = Sequence[Any]


def derive_seed(seed: int, index: int) -> int:
    """Independent 63-bit seed for sweep point ``index``."""
    state = np.random.SeedSequence([int(seed), 0xC11, int(index)]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def _cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


class Writer:
    """Writes CSVs into one directory and remembers them for cleanup."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[Path] = []

    def table(self, name: str, header: Sequence[str], rows: Iterable[Row]) -> Path:
        rows = list(rows)
        if not rows:
            raise RuntimeError(f"{name}: no data rows")
        path = self.out / name
        self.files.append(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        return path

    def cleanup(self) -> None:
        for p in self.files:
            p.unlink(missing_ok=True)
        (self.out / MANIFEST).unlink(missing_ok=True)


# ------------------------------------------------------------------ builders

def channel_of(c: dict):
    return gamma_params(c["b0"], c["m"], c["omega"])


def geometry_of(c: dict, **over) -> GeometryParams:
    kw = dict(re=c["re_km"] * 1e3, rs=c["rs_km"] * 1e3, lambda_s=c["lambda_s"],
              lambda_g=c["lambda_g"], theta_min=math.radians(c["theta_min_deg"]))
    kw.update(over)
    return GeometryParams(**kw)


def budgets_of(c: dict) -> tuple[LinkBudget, LinkBudget]:
    common = dict(gbar=c["gbar"], fc_hz=c["fc_hz"], noise_dbm_hz=c["noise_dbm_hz"],
                  bandwidth_hz=c["bandwidth_hz"])
    dl = downlink_budget(pt_dbw=c["pt_sat_dbw"], gt_dbi=c["gt_sat_dbi"], gr_dbi=c["gr_ground_dbi"], **common)
    ul = uplink_budget(pt_dbw=c["pt_ground_dbm"] - 30.0, gt_dbi=c["gt_ground_dbi"],
                       gr_dbi=c["gr_sat_dbi"], **common)
    return dl, ul


# ------------------------------------------------------------------ scenarios

def run_fig3(c: dict, w: Writer) -> None:
    rows = []
    for i, pf_g in enumerate(c["pf_g_values"]):
        seed = derive_seed(c["seed"], i)  # shared across the Pf_S sweep
        for pf_s in c["pf_s_values"]:
            analytic = ps_semi_analytic(pf_g, pf_s, c["regions"], c["ng"], c["ns"])
            mc, err = estimate_ps_empirical(pf_g, pf_s, c["regions"], c["ng"], c["ns"],
                                            c["trials"], seed=seed, n_jobs=c["n_jobs"])
            rows.append((pf_g, pf_s, analytic, mc, err))
    w.table("fig3.csv", ("pf_g", "pf_s", "ps_analytic", "ps_mc", "stderr"), rows)


def run_fig4(c: dict, w: Writer) -> None:
    channel = channel_of(c)
    dl_b, ul_b = budgets_of(c)
    gammas = c["gamma_db_values"]
    rows = []
    for direction, budget in ((Direction.DOWNLINK, dl_b), (Direction.UPLINK, ul_b)):
        geom = geometry_of(c, direction=direction)
        lin = [db(g) for g in gammas]
        mc, err = simulate_link_outage(lin, geom, channel, budget, c["trials"],
                                       seed=c["seed"], n_jobs=c["n_jobs"])
        for g, x, p, e in zip(gammas, lin, mc, err):
            rows.append((direction.value, g, outage_probability(x, geom, channel, budget), p, e))
    w.table("fig4.csv", ("direction", "gamma_db", "pout_analytic", "pout_mc", "stderr"), rows)


def _stability_point(c: dict, geom: GeometryParams, m: int, ns: int | None, seed: int):
    channel = channel_of(c)
    dl_b, ul_b = budgets_of(c)
    gdl, gul = db(c["gamma_dl_db"]), db(c["gamma_ul_db"])
    analytic = ps_closed_form((gdl, gul), geom, geom, channel, (dl_b, ul_b),
                              c["pout_wl"], c["pout_isl"], m, c["ng"], ns)
    mc, err = estimate_ps_end_to_end(gdl, gul, geom, channel, dl_b, ul_b, c["pout_wl"], c["pout_isl"],
                                     m, c["ng"], ns, c["trials"], seed=seed, n_jobs=c["n_jobs"])
    return analytic, mc, err


def _sweep(c: dict, w: Writer, name: str, column: str, values, point: Callable[[Any, int], tuple],
           offset: int) -> None:
    rows = [(v, *point(v, derive_seed(c["seed"], offset + i))) for i, v in enumerate(values)]
    w.table(name, (column, "ps_analytic", "ps_mc", "stderr"), rows)


def run_stability_dynamic(c: dict, w: Writer) -> None:
    base = geometry_of(c)
    _sweep(c, w, "stability_dynamic_lambda_s.csv", "lambda_s", c["lambda_s_values"],
           lambda v, s: _stability_point(c, geometry_of(c, lambda_s=v), c["regions"], None, s), 0)
    _sweep(c, w, "stability_dynamic_altitude_km.csv", "altitude_km", c["altitude_km_values"],
           lambda v, s: _stability_point(c, base.with_altitude(v * 1e3), c["regions"], None, s), 100)
    _sweep(c, w, "stability_dynamic_regions.csv", "regions", c["regions_values"],
           lambda v, s: _stability_point(c, base, v, None, s), 200)


def run_stability_fixed(c: dict, w: Writer) -> None:
    _sweep(c, w, "stability_fixed_lambda_g.csv", "lambda_g", c["lambda_g_values"],
           lambda v, s: _stability_point(c, geometry_of(c, lambda_g=v), c["regions"], c["ns"], s), 300)


def _workload(c: dict) -> Workload:
    return Workload(txs_per_round=c["txs_per_round"] or None, pf_g=c["pf_g_net"], pf_s=c["pf_s_net"])


def _topology(c: dict, m: int, ng: int, ns: int):
    return build_topology(c["tle_file"] or None, c["stations_file"] or None, m=m, nr=ng + ns,
                          ns=ns, seed=c["seed"])


def _net_metrics(c: dict, m: int, ns: int, protocol: str):
    ng = c["nr"] - c["ns_net"]
    topo = _topology(c, m, ng, ns)
    return run_scenario(topo, protocol, _workload(c), rounds=c["rounds"], seed=c["seed"])


def _tps(metrics) -> float:
    try:
        return measure_tps(metrics)
    except ValueError:
        return math.nan


def run_latency_vs_m(c: dict, w: Writer) -> None:
    rows = [(m, p, _net_metrics(c, m, c["ns_net"], p).mean_latency)
            for m in c["m_net_values"] for p in c["protocols"]]
    w.table("latency_vs_m.csv", ("m", "protocol", "mean_latency_s"), rows)


def run_tps_vs_m(c: dict, w: Writer) -> None:
    rows = [(m, p, _tps(_net_metrics(c, m, c["ns_net"], p)))
            for m in c["m_net_values"] for p in c["protocols"]]
    w.table("tps_vs_m.csv", ("m", "protocol", "tps"), rows)


def run_latency_vs_ns(c: dict, w: Writer) -> None:
    rows = [(m, ns, p, _net_metrics(c, m, ns, p).mean_latency)
            for m in c["m_net_values"] for ns in c["ns_net_values"] for p in c["protocols"]]
    w.table("latency_vs_ns.csv", ("m", "ns", "protocol", "mean_latency_s"), rows)


def run_custom(c: dict, w: Writer) -> None:
    channel = channel_of(c)
    dl_b, ul_b = budgets_of(c)
    geom = geometry_of(c)
    gdl, gul = db(c["gamma_dl_db"]), db(c["gamma_ul_db"])
    rows = []
    pouts = []
    for name, direction, budget, g, idx in (("pout_dl", Direction.DOWNLINK, dl_b, gdl, 0),
                                            ("pout_ul", Direction.UPLINK, ul_b, gul, 1)):
        gd = geom.with_direction(direction)
        analytic = outage_probability(g, gd, channel, budget)
        mc, err = simulate_link_outage(g, gd, channel, budget, c["trials"],
                                       seed=derive_seed(c["seed"], idx), n_jobs=c["n_jobs"])
        pouts.append(analytic)
        rows.append((name, analytic, mc, err))
    pf_g, pf_s = compose_fault_probs(pouts[0], pouts[1], c["pout_wl"], c["pout_isl"])
    rows.append(("pf_g", pf_g, math.nan, math.nan))
    rows.append(("pf_s", pf_s, math.nan, math.nan))
    rows.append(("ps_fixed", *_stability_point(c, geom, c["regions"], c["ns"], derive_seed(c["seed"], 2))))
    rows.append(("ps_dynamic", *_stability_point(c, geom, c["regions"], None, derive_seed(c["seed"], 3))))
    w.table("custom.csv", ("quantity", "analytic", "mc", "stderr"), rows)


SCENARIO_RUNNERS: dict[str, Callable[[dict, Writer], None]] = {
    "Fig3": run_fig3,
    "Fig4": run_fig4,
    "LatencyVsNs": run_latency_vs_ns,
    "LatencyVsM": run_latency_vs_m,
    "TpsVsM": run_tps_vs_m,
    "StabilityDynamic": run_stability_dynamic,
    "StabilityFixed": run_stability_fixed,
    "Custom": run_custom,
}


def describe_version() -> str:
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5, check=True)
        return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        return __version__


def run_experiment(cfg: ExperimentConfig) -> list[Path]:
    """Run the configured scenario; returns the written files (manifest last).

    On any error the files written by this run are removed and the error
    propagates.
    """
    resolved = cfg.resolved()
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    writer = Writer(out)
    start = time.perf_counter()
    try:
        SCENARIO_RUNNERS[resolved["scenario"]](resolved, writer)
        manifest = {
            "version": describe_version(),
            "scenario": resolved["scenario"],
            "seed": resolved["seed"],
            "wall_time_s": round(time.perf_counter() - start, 3),
            "files": [p.name for p in writer.files],
            "config": {k: format_value(v) for k, v in sorted(resolved.items())},
        }
        path = out / MANIFEST
        path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except BaseException:
        writer.cleanup()
        raise
    return [*writer.files, path]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pscdss", description=__doc__)
    ap.add_argument("--config", help="flat key = value file")
    ap.add_argument("--scenario", help="Fig3, Fig4, LatencyVsNs, LatencyVsM, TpsVsM, "
                                       "StabilityDynamic, StabilityFixed or Custom")
    ap.add_argument("--seed")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--trials")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        for key in ("scenario", "seed", "out", "trials"):
            value = getattr(args, key)
            if value is not None:
                apply_override(cfg, key, value)
        cfg.resolved()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        files = run_experiment(cfg)
    except Exception as exc:  # noqa: BLE001 - any module failure maps to exit 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for p in files:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
