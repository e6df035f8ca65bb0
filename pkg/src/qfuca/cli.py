"""Configuration-driven experiment runner.

Each subcommand resolves its configuration from built-in defaults, an
optional JSON config file, and command-line flag overrides (highest
precedence), validates it against the published schema, runs the experiment
and writes machine-readable CSV/JSON outputs plus a manifest echoing the
fully resolved configuration.  Outputs are byte-reproducible for identical
configurations and seeds.

Exit codes: 0 success, 2 configuration error, 3 infeasible geometry,
4 size-guard violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (CapacityCurve, capacity_curve, complexity_comparison,
                       effective_rank, eigen_spectrum, search_max_streams,
                       stream_sir)
from .channel import (LinkConfig, bccb_deviation, build_physical_channel,
                      channel_rank, idealize_bccb, lift_to_logical,
                      write_channel_csv)
from .detection import BerCurve, BerScenario, run_ber
from .errors import ConfigError, InfeasibleGeometry, LayoutSpecError, SizeGuardError
from .geometry import (LayoutSpec, RigidTransform, build_layout,
                       transform_layout, validate_layout, write_layout_csv,
                       write_layout_json)
from .transceiver import TransceiverChain

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_SIZE_GUARD = 4

_DEFAULT_SNR_DB = tuple(float(v) for v in range(0, 31, 2))


@dataclass(frozen=True)
class Field:
    type: object
    default: object = None
    required: bool = False
    help: str = ""


_LAYOUT_KEYS = {
    "case": Field(int, required=True, help="sharing case 1..5"),
    "cells": Field(int, required=True, help="number of inner cells"),
    "slots": Field(int, required=True, help="element slots per cell"),
    "chain": Field(int, help="cells per shared chain (case 4 only)"),
    "radius": Field(float, 1.0, help="inter-ring radius in meters"),
    "inner_radius": Field(float, help="cell radius override (case 1 only)"),
    "dedup_tol": Field(float, help="coincidence merge tolerance in meters"),
}

_LINK_KEYS = {
    "frequency": Field(float, 3e9, help="carrier frequency in Hz"),
    "distance": Field(float, 50.0, help="link distance in meters"),
    "power": Field(float, 1.0, help="total transmit power in watts"),
    "bandwidth": Field(float, 1e6, help="bandwidth in Hz"),
}

CONFIG_SCHEMA: dict[str, dict[str, Field]] = {
    "layout": dict(_LAYOUT_KEYS),
    "spectrum": {
        **_LAYOUT_KEYS, **_LINK_KEYS,
        "rank_tol": Field(float, 1e-10, help="relative effective-rank tolerance"),
    },
    "capacity": {
        **_LAYOUT_KEYS, **_LINK_KEYS,
        "snr_db": Field(list, list(_DEFAULT_SNR_DB), help="SNR sweep in dB"),
        "policy": Field(str, "equal_power", help="equal_power or water_filling"),
        "normalize": Field(bool, False,
                           help="reference gains to the boresight free-space gain"),
    },
    "sir": {
        **_LAYOUT_KEYS, **_LINK_KEYS,
        "rotation": Field(float, 0.0, help="receive-array rotation in radians"),
        "lateral_dx": Field(float, 0.0, help="receive-array x offset in meters"),
        "lateral_dy": Field(float, 0.0, help="receive-array y offset in meters"),
        "axial": Field(float, 0.0, help="receive-array z offset in meters"),
    },
    "ber": {
        **_LAYOUT_KEYS, **_LINK_KEYS,
        "order": Field(int, 4, help="PSK alphabet size (power of two)"),
        "noise_mode": Field(str, "physical", help="physical or logical"),
        "channel_model": Field(str, "idealized", help="exact, idealized or identity"),
        "snr_db": Field(list, [0.0, 4.0, 8.0, 12.0], help="per-element SNR sweep in dB"),
        "trials": Field(int, 1000, help="Monte Carlo trials per SNR point"),
        "scheme": Field(str, "symbolwise_ml",
                        help="symbolwise_ml, zero_forcing or joint_ml"),
    },
    "complexity": {
        "cells": Field(int, required=True, help="number of inner cells"),
        "slots": Field(int, required=True, help="element slots per cell"),
        "alphabet": Field(int, required=True, help="modulation alphabet size"),
    },
    "search": {
        "budget": Field(int, required=True, help="maximum physical elements"),
        "cases": Field(list, [1, 2, 3, 4, 5], help="sharing cases to consider"),
        "n_min": Field(int, 1, help="smallest cell count"),
        "n_max": Field(int, 8, help="largest cell count"),
        "k_min": Field(int, 3, help="smallest slots per cell"),
        "k_max": Field(int, 12, help="largest slots per cell"),
        "radius": Field(float, 1.0, help="inter-ring radius in meters"),
    },
    "figure3": {
        **_LINK_KEYS,
        "radius": Field(float, 1.0, help="inter-ring radius in meters"),
        "snr_db": Field(list, list(_DEFAULT_SNR_DB), help="SNR sweep in dB"),
    },
}

for _schema in CONFIG_SCHEMA.values():
    _schema["out"] = Field(str, "runs", help="output directory")
    _schema["seed"] = Field(int, 0, help="base random seed")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    params: dict
    out_dir: Path
    seed: int


# ---------------------------------------------------------------------------
# config resolution


def _coerce(name: str, value, spec: Field):
    t = spec.type
    try:
        if t is bool:
            if isinstance(value, bool):
                return value
            if isinstance(value, str):
                if value.lower() in ("true", "1", "yes"):
                    return True
                if value.lower() in ("false", "0", "no"):
                    return False
            raise ValueError(value)
        if t is list:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip() != ""]
            if not isinstance(value, (list, tuple)):
                raise ValueError(value)
            return [float(v) if "." in str(v) or "e" in str(v).lower() or "inf" in str(v).lower()
                    else int(v) for v in value]
        if t is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        return t(value)
    except (TypeError, ValueError):
        raise ConfigError(f"key '{name}' expects {t.__name__}, got {value!r}") from None


def load_config_file(path: str | Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def resolve_config(subcommand: str, file_params: dict | None,
                   overrides: dict | None) -> RunConfig:
    """Merge defaults, config file and flag overrides; validate the result."""
    if subcommand not in CONFIG_SCHEMA:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    schema = CONFIG_SCHEMA[subcommand]
    merged: dict = {k: f.default for k, f in schema.items() if f.default is not None}
    for source in (file_params or {}), (overrides or {}):
        unknown = sorted(set(source) - set(schema))
        if unknown:
            raise ConfigError(
                f"unknown keys for subcommand '{subcommand}': {', '.join(unknown)}")
        for k, v in source.items():
            if v is not None:
                merged[k] = _coerce(k, v, schema[k])
    missing = sorted(k for k, f in schema.items() if f.required and k not in merged)
    if missing:
        raise ConfigError(
            f"missing required keys for subcommand '{subcommand}': {', '.join(missing)}")
    out_dir = Path(merged["out"])
    return RunConfig(subcommand=subcommand, params=merged, out_dir=out_dir,
                     seed=int(merged["seed"]))


def _layout_spec(params: dict) -> LayoutSpec:
    return LayoutSpec(case_id=params["case"], num_cells=params["cells"],
                      slots_per_cell=params["slots"],
                      chain_cells=params.get("chain"),
                      inter_radius=params["radius"],
                      inner_radius=params.get("inner_radius"),
                      dedup_tol=params.get("dedup_tol"))


def _link_config(params: dict) -> LinkConfig:
    return LinkConfig(carrier_frequency=params["frequency"],
                      link_distance=params["distance"],
                      total_power=params["power"],
                      bandwidth=params["bandwidth"])


# ---------------------------------------------------------------------------
# output helpers


def _write_json(payload: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def _capacity_rows(curve: CapacityCurve):
    for i in range(len(curve.snr_db)):
        yield (float(curve.snr_db[i]),
               float(curve.efficiency_equal_power[i]),
               float(curve.efficiency_water_filling[i]),
               float(curve.throughput[i]))


_CAPACITY_HEADER = ["snr_db", "efficiency_equal_power_bit_per_s_per_hz",
                    "efficiency_water_filling_bit_per_s_per_hz", "throughput_bit_per_s"]


def _write_capacity(curve: CapacityCurve, out: Path, stem: str) -> list[Path]:
    csv_path = out / f"{stem}.csv"
    _write_csv(csv_path, _CAPACITY_HEADER, _capacity_rows(curve))
    json_path = out / f"{stem}.json"
    _write_json({
        "snr_db": [float(v) for v in curve.snr_db],
        "efficiency_equal_power_bit_per_s_per_hz": [float(v) for v in curve.efficiency_equal_power],
        "efficiency_water_filling_bit_per_s_per_hz": [float(v) for v in curve.efficiency_water_filling],
        "throughput_bit_per_s": [float(v) for v in curve.throughput],
        "policy": curve.policy,
        "bandwidth_hz": curve.bandwidth,
        "meta": curve.meta,
    }, json_path)
    return [csv_path, json_path]


def _ber_to_files(curve: BerCurve, out: Path) -> list[Path]:
    csv_path = out / "ber.csv"
    rows = []
    for i in range(len(curve.snr_db)):
        ber = curve.ber[i]
        ci = curve.ci95_halfwidth[i]
        rows.append((float(curve.snr_db[i]),
                     float(ber) if np.isfinite(ber) else float("nan"),
                     float(ci) if np.isfinite(ci) else float("nan"),
                     int(curve.bits_sent[i])))
    _write_csv(csv_path, ["snr_db", "ber", "ci95_halfwidth", "bits_sent"], rows)
    sc = curve.scenario
    json_path = out / "ber.json"
    _write_json({
        "snr_db": [float(v) for v in curve.snr_db],
        "ber": [float(v) if np.isfinite(v) else None for v in curve.ber],
        "ci95_halfwidth": [float(v) if np.isfinite(v) else None for v in curve.ci95_halfwidth],
        "bit_errors": [int(v) for v in curve.bit_errors],
        "bits_sent": [int(v) for v in curve.bits_sent],
        "active_streams": curve.active_stream_count,
        "scenario": {
            "case": sc.layout_spec.case_id,
            "cells": sc.layout_spec.num_cells,
            "slots": sc.layout_spec.slots_per_cell,
            "chain": sc.layout_spec.chain_cells,
            "radius_m": sc.layout_spec.inter_radius,
            "frequency_hz": sc.link.carrier_frequency,
            "distance_m": sc.link.link_distance,
            "power_w": sc.link.total_power,
            "order": sc.constellation_order,
            "noise_mode": sc.noise_mode,
            "channel_model": sc.channel_model,
            "trials": sc.trials,
            "seed": sc.seed,
            "scheme": sc.scheme,
        },
    }, json_path)
    return [csv_path, json_path]


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_layout(cfg: RunConfig, out: Path) -> list[Path]:
    layout = build_layout(_layout_spec(cfg.params))
    json_path, csv_path = out / "layout.json", out / "layout.csv"
    write_layout_json(layout, json_path)
    write_layout_csv(layout, csv_path)
    report = validate_layout(layout)
    report_path = out / "validation.json"
    _write_json(report.as_dict(), report_path)
    return [json_path, csv_path, report_path]


def _build_idealized(cfg: RunConfig, rx_transform: RigidTransform | None = None):
    layout = build_layout(_layout_spec(cfg.params))
    link = _link_config(cfg.params)
    rx = transform_layout(layout, rx_transform) if rx_transform is not None else layout
    phys = build_physical_channel(layout, rx, link)
    exact = lift_to_logical(phys)
    return layout, link, exact, idealize_bccb(exact)


def _cmd_spectrum(cfg: RunConfig, out: Path) -> list[Path]:
    layout, link, exact, ideal = _build_idealized(cfg)
    spectrum = eigen_spectrum(ideal)
    rank_tol = cfg.params["rank_tol"]
    eig_path = out / "eigenvalues.csv"
    rows = []
    grid = spectrum.grid
    for n in range(spectrum.num_cells):
        for k in range(spectrum.slots_per_cell):
            v = grid[n, k]
            rows.append((n, k, float(v.real), float(v.imag), float(abs(v))))
    _write_csv(eig_path, ["cell_index", "slot_index", "re", "im", "magnitude"], rows)
    chan_path = out / "channel.csv"
    write_channel_csv(exact.matrix, chan_path)
    summary_path = out / "summary.json"
    _write_json({
        "stream_slots": layout.spec.num_slots,
        "element_count": layout.num_elements,
        "effective_rank": effective_rank(spectrum, rank_tol),
        "rank_tol": rank_tol,
        "exact_channel_rank": channel_rank(exact.matrix, rank_tol),
        "bccb_deviation": bccb_deviation(exact),
        "wavelength_m": link.wavelength,
        "units": {"eigenvalues": "dimensionless gain", "channel": "dimensionless gain"},
    }, summary_path)
    return [eig_path, chan_path, summary_path]


def _cmd_capacity(cfg: RunConfig, out: Path) -> list[Path]:
    layout, link, exact, ideal = _build_idealized(cfg)
    spectrum = eigen_spectrum(ideal)
    meta = {"case": layout.spec.case_id, "cells": layout.num_cells,
            "slots": layout.slots_per_cell, "elements": layout.num_elements,
            "frequency_hz": link.carrier_frequency, "distance_m": link.link_distance,
            "normalized": bool(cfg.params["normalize"])}
    values = spectrum.values
    if cfg.params["normalize"]:
        from .channel import freespace_gain
        ref = abs(freespace_gain(link.link_distance, link.wavelength))
        values = values / ref
        meta["gain_reference"] = "boresight_freespace"
        spectrum = type(spectrum)(values=values, num_cells=spectrum.num_cells,
                                  slots_per_cell=spectrum.slots_per_cell,
                                  source=spectrum.source)
    curve = capacity_curve(spectrum, cfg.params["snr_db"], policy=cfg.params["policy"],
                           bandwidth=link.bandwidth, meta=meta)
    return _write_capacity(curve, out, "capacity")


def _cmd_sir(cfg: RunConfig, out: Path) -> list[Path]:
    t = RigidTransform(rotation=cfg.params["rotation"],
                       lateral_offset=(cfg.params["lateral_dx"], cfg.params["lateral_dy"]),
                       axial_offset=cfg.params["axial"])
    layout, link, exact, ideal = _build_idealized(cfg, rx_transform=t)
    report = stream_sir(exact)
    csv_path = out / "sir.csv"
    rows = []
    for i, v in enumerate(report.sir_db):
        rows.append((i // report.slots_per_cell, i % report.slots_per_cell, float(v)))
    _write_csv(csv_path, ["cell_index", "slot_index", "sir_db"], rows)
    json_path = out / "sir.json"
    _write_json({
        "mean_sir_db": report.mean_sir_db,
        "sir_db": [float(v) for v in report.sir_db],
        "rotation_rad": cfg.params["rotation"],
        "lateral_offset_m": [cfg.params["lateral_dx"], cfg.params["lateral_dy"]],
        "axial_offset_m": cfg.params["axial"],
    }, json_path)
    return [csv_path, json_path]


def _cmd_ber(cfg: RunConfig, out: Path) -> list[Path]:
    scenario = BerScenario(
        layout_spec=_layout_spec(cfg.params), link=_link_config(cfg.params),
        constellation_order=cfg.params["order"], noise_mode=cfg.params["noise_mode"],
        channel_model=cfg.params["channel_model"],
        snr_db=tuple(float(v) for v in cfg.params["snr_db"]),
        trials=cfg.params["trials"], seed=cfg.seed, scheme=cfg.params["scheme"])
    return _ber_to_files(run_ber(scenario), out)


def _cmd_complexity(cfg: RunConfig, out: Path) -> list[Path]:
    comp = complexity_comparison(cfg.params["cells"], cfg.params["slots"],
                                 cfg.params["alphabet"])
    payload = {
        "architectures": {
            arch: {
                "additions": str(rep.additions),
                "multiplications": str(rep.multiplications),
                "log10_additions": rep.log10_additions,
                "log10_multiplications": rep.log10_multiplications,
            }
            for arch, rep in comp["reports"].items()
        },
        "addition_ratio_ula_over_qfuca": comp["addition_ratio"],
        "multiplication_ratio_ula_over_qfuca": comp["multiplication_ratio"],
        "notes": comp["notes"],
    }
    path = out / "complexity.json"
    _write_json(payload, path)
    return [path]


def _cmd_search(cfg: RunConfig, out: Path) -> list[Path]:
    result = search_max_streams(
        cfg.params["budget"],
        allowed_cases=tuple(int(c) for c in cfg.params["cases"]),
        n_range=(cfg.params["n_min"], cfg.params["n_max"]),
        k_range=(cfg.params["k_min"], cfg.params["k_max"]),
        inter_radius=cfg.params["radius"])

    def cand(c):
        return {"case": c.case_id, "cells": c.num_cells, "slots": c.slots_per_cell,
                "chain": c.chain_cells, "elements": c.element_count,
                "streams": c.stream_count}

    path = out / "search.json"
    _write_json({
        "budget": cfg.params["budget"],
        "best": cand(result.best) if result.best else None,
        "candidates": [cand(c) for c in result.candidates],
    }, path)
    return [path]


_FIG3_CONFIGS = (
    ("uca_9", 1, 1, 9), ("uca_16", 1, 1, 16), ("uca_25", 1, 1, 25),
    ("uca_32", 1, 1, 32), ("qfuca_9", 5, 4, 4), ("qfuca_25", 5, 4, 8),
)


def _cmd_figure3(cfg: RunConfig, out: Path) -> list[Path]:
    from .channel import freespace_gain
    link = _link_config(cfg.params)
    radius = cfg.params["radius"]
    snr_db = cfg.params["snr_db"]
    ref = abs(freespace_gain(link.link_distance, link.wavelength))
    written = []
    summary = {}
    for legend, case_id, n, k in _FIG3_CONFIGS:
        inner = radius if case_id == 1 else None
        spec = LayoutSpec(case_id=case_id, num_cells=n, slots_per_cell=k,
                          inter_radius=radius, inner_radius=inner)
        layout = build_layout(spec)
        exact = lift_to_logical(build_physical_channel(layout, layout, link))
        spectrum = eigen_spectrum(idealize_bccb(exact))
        normalized = type(spectrum)(values=spectrum.values / ref,
                                    num_cells=spectrum.num_cells,
                                    slots_per_cell=spectrum.slots_per_cell,
                                    source=spectrum.source)
        meta = {"legend": legend, "elements": layout.num_elements,
                "streams": spec.num_slots, "gain_reference": "boresight_freespace"}
        curve = capacity_curve(normalized, snr_db, policy="equal_power",
                               bandwidth=link.bandwidth, meta=meta)
        written.extend(_write_capacity(curve, out, f"capacity_{legend}"))
        summary[legend] = {
            "elements": layout.num_elements, "streams": spec.num_slots,
            "efficiency_equal_power_at_max_snr_bit_per_s_per_hz":
                float(curve.efficiency_equal_power[-1]),
        }
    summary_path = out / "figure3.json"
    _write_json({
        "curves": summary,
        "frequency_hz": link.carrier_frequency,
        "bandwidth_hz": link.bandwidth,
        "distance_m": link.link_distance,
        "radius_m": radius,
        "gain_reference": "boresight_freespace",
    }, summary_path)
    written.append(summary_path)
    return written


_COMMANDS = {
    "layout": _cmd_layout,
    "spectrum": _cmd_spectrum,
    "capacity": _cmd_capacity,
    "sir": _cmd_sir,
    "ber": _cmd_ber,
    "complexity": _cmd_complexity,
    "search": _cmd_search,
    "figure3": _cmd_figure3,
}


def execute(cfg: RunConfig) -> list[Path]:
    """Run one resolved configuration; returns the written files."""
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    written = _COMMANDS[cfg.subcommand](cfg, out)
    manifest_path = out / "manifest.json"
    _write_json({
        "artifact": "qfuca",
        "version": __version__,
        "subcommand": cfg.subcommand,
        "config": {k: (str(v) if isinstance(v, Path) else v)
                   for k, v in sorted(cfg.params.items())},
        "outputs": sorted(p.name for p in written),
    }, manifest_path)
    return written + [manifest_path]


# ---------------------------------------------------------------------------
# argument parsing


def _add_subcommand(subparsers, name: str) -> None:
    sub = subparsers.add_parser(name, help=f"run the {name} experiment")
    sub.add_argument("--config", type=str, default=None,
                     help="JSON config file with the keys of this subcommand")
    for key, spec in CONFIG_SCHEMA[name].items():
        flag = "--" + key.replace("_", "-")
        if spec.type is list:
            sub.add_argument(flag, type=str, default=None,
                             help=spec.help + " (comma separated)")
        elif spec.type is bool:
            sub.add_argument(flag, type=str, default=None,
                             help=spec.help + " (true/false)")
        else:
            sub.add_argument(flag, type=spec.type, default=None, help=spec.help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qfuca",
        description="Quasi-fractal circular array LOS MIMO simulations")
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name in CONFIG_SCHEMA:
        _add_subcommand(subparsers, name)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_params = load_config_file(args.config) if args.config else {}
        overrides = {k: v for k, v in vars(args).items()
                     if k not in ("subcommand", "config") and v is not None}
        cfg = resolve_config(args.subcommand, file_params, overrides)
        written = execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LayoutSpecError, ValueError) as exc:
        if isinstance(exc, InfeasibleGeometry):
            print(f"infeasible geometry: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        if isinstance(exc, SizeGuardError):
            print(f"size guard: {exc}", file=sys.stderr)
            return EXIT_SIZE_GUARD
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
