#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Experiment driver for the stabilized cutDG bulk-surface solver.

Subcommands:
- convergence        errors and EOC per refinement level (--ablate-ghost: μ_Γ = τ_Ω = τ_Γ = 0)
- condition-sweep    κ(𝒜) while translating the circle by δ·(cell, cell); rows are merged per --config
- condition-scaling  κ(𝒜) against h over refinement levels
- geometry-check     sup-distance and normal deviation of the discrete surface
- properties         coercivity / ghost-penalty equivalence / Poincaré constants across δ
- exactness          affine data on a strip, reproduced up to round-off

Defaults come from config.json (data/config.json or ./config.json); flags override them.

Usage (examples):
  python cutdg.py convergence --levels 5 --n0 8 --out data
  python cutdg.py convergence --levels 5 --ablate-ghost
  python cutdg.py condition-sweep --level 1 --positions 101 --config all
  python cutdg.py condition-sweep --level 1 --positions 101 --config none --scaling one-sided
  python cutdg.py properties --level 1 --positions 21 --config-file mi_config.txt
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from typing import Optional

import pandas as pd

from lib.config import config_debug, config_path, output_dir, resolve_config, stabilization_from
from lib.errors import CutDGError
from lib.forms import GHOST_CONFIGS
from lib.runlog import add_log, last_modified, read_csv_safe
from lib.solver import SCALING_MODES
from lib.studies import (
    CONDITION_COLUMNS,
    PROPERTY_COLUMNS,
    run_condition_scaling,
    run_condition_sweep,
    run_convergence,
    run_exactness,
    run_geometry_check,
    run_property_suite,
    scaling_slope,
    write_table,
)

STAB_FLAGS = ("c_bulk", "c_surf", "gamma_bulk", "gamma_surf", "mu_bulk", "mu_surf", "tau_bulk", "tau_surf")


# ------------------------- Helpers -------------------------
def merge_table(new_rows: pd.DataFrame, path: str, key: str, columns: list) -> pd.DataFrame:
    """Sustituye en el CSV las filas cuyo 'key' aparece en new_rows y conserva el resto."""
    old = read_csv_safe(path)
    if old is not None and not old.empty and key in old.columns:
        old = old[~old[key].isin(set(new_rows[key]))]
        merged = pd.concat([old[columns], new_rows], ignore_index=True)
    else:
        merged = new_rows.copy()
    return merged


def merge_properties(new_rows: pd.DataFrame, path: str) -> pd.DataFrame:
    """Sustituye en properties.csv las filas con los mismos nombres y conserva el resto."""
    merged = merge_table(new_rows, path, "name", PROPERTY_COLUMNS)
    merged["pass"] = merged["pass"].astype(str).str.lower().isin(["true", "1"])
    write_table(merged, path)
    return merged


def merge_condition(new_rows: pd.DataFrame, path: str) -> pd.DataFrame:
    """condition.csv acumula configuraciones: una ejecución sólo reemplaza las suyas."""
    merged = merge_table(new_rows, path, "config", CONDITION_COLUMNS)
    order = {c: i for i, c in enumerate(GHOST_CONFIGS)}
    merged = (merged.assign(_orden=merged["config"].map(order))
              .sort_values(["_orden", "delta"], kind="mergesort")
              .drop(columns="_orden")
              .reset_index(drop=True))
    write_table(merged, path)
    return merged


def condition_file(base: str, scaling: str) -> str:
    """condition.csv / condition_one_sided.csv (y análogos) según el reescalado."""
    return f"{base}.csv" if scaling == "symmetric" else f"{base}_{scaling.replace('-', '_')}.csv"


def print_table(title: str, df: pd.DataFrame) -> None:
    print(f"== {title} ==")
    with pd.option_context("display.max_rows", 200, "display.width", 160):
        print(df.to_string(index=False))


def print_outputs(out: str) -> None:
    print(f"\nResultados en: {out}")
    for name in sorted(os.listdir(out)):
        if name.endswith(".csv"):
            print(f"  {name:<32} {last_modified(os.path.join(out, name))}")


def _overrides(args) -> dict:
    out = {k: getattr(args, k, None) for k in STAB_FLAGS}
    for k in ("n0", "levels", "positions", "out_dir", "scaling"):
        out[k] = getattr(args, k, None)
    if getattr(args, "level", None) is not None:
        out["sweep_level"] = args.level
    if getattr(args, "samples", None) is not None:
        out["samples_per_segment"] = args.samples
    if getattr(args, "dump", False):
        out["dump_mesh"] = True
    return out


# ------------------------- Subcommands -------------------------
def cmd_convergence(args, cfg, params, out):
    ablate = bool(args.ablate_ghost)
    df = run_convergence(cfg["levels"], cfg["n0"], params, ablate=ablate, rel_tol=cfg["rel_tol"],
                         out_dir=out, dump=cfg["dump_mesh"])
    name = "convergence_ablated.csv" if ablate else "convergence.csv"
    write_table(df, os.path.join(out, name))
    print_table("cutDG: convergencia" + (" (ablación)" if ablate else ""), df)
    failed = int(df["err_l2_bulk"].isna().sum())
    if failed:
        print(f"  ℹ️  {failed} nivel(es) sin solución (fallo del solver registrado)")
    return df


def cmd_condition_sweep(args, cfg, params, out):
    configs = list(GHOST_CONFIGS) if args.config == "all" else [args.config]
    scaling = cfg["scaling"]
    df = run_condition_sweep(cfg["sweep_level"], cfg["positions"], params, configs, cfg["n0"],
                             cfg["zero_threshold"], cfg["dense_limit"], scaling, out_dir=out)
    merged = merge_condition(df, os.path.join(out, condition_file("condition", scaling)))
    print_table(f"cutDG: barrido de condición ({scaling})", df)
    for config, sub in df.groupby("config", sort=False):
        print(f"  {config:<11} max/min κ = {sub['kappa'].max() / sub['kappa'].min():.3e}")
    kept = sorted(set(merged["config"]) - set(configs))
    if kept:
        print(f"  ℹ️  se conservan las filas previas de: {', '.join(kept)}")
    return df


def cmd_condition_scaling(args, cfg, params, out):
    levels = args.levels if args.levels is not None else cfg["scaling_levels"]
    scaling = cfg["scaling"]
    df = run_condition_scaling(levels, cfg["n0"], params, cfg["zero_threshold"], cfg["dense_limit"],
                               scaling, out_dir=out)
    write_table(df, os.path.join(out, condition_file("condition_scaling", scaling)))
    print_table(f"cutDG: escalado de la condición ({scaling})", df)
    try:
        slope = scaling_slope(df)
    except CutDGError:
        slope = math.nan
    print(f"  pendiente log κ / log h = {slope:.3f}")
    if scaling == "symmetric":
        row = pd.DataFrame([{"name": "condition_slope", "constant": slope, "delta": math.nan,
                             "pass": bool(-2.5 <= slope <= -1.6)}], columns=PROPERTY_COLUMNS)
        merge_properties(row, os.path.join(out, "properties.csv"))
    return df


def cmd_geometry_check(args, cfg, params, out):
    geo, props = run_geometry_check(cfg["levels"], cfg["n0"], cfg["samples_per_segment"])
    write_table(geo, os.path.join(out, "geometry.csv"))
    merge_properties(props, os.path.join(out, "properties.csv"))
    print_table("cutDG: hipótesis geométricas", geo)
    print_table("pendientes", props)
    return geo


def cmd_properties(args, cfg, params, out):
    df = run_property_suite(cfg["sweep_level"], cfg["positions"], params, cfg["n0"], cfg["rel_tol"], out_dir=out)
    merge_properties(df, os.path.join(out, "properties.csv"))
    print_table("cutDG: propiedades (resumen)", df[df["delta"].isna()])
    return df


def cmd_exactness(args, cfg, params, out):
    df = run_exactness(cfg["levels"], cfg["n0"], params, out_dir=out)
    write_table(df, os.path.join(out, "exactness.csv"))
    print_table("cutDG: exactitud con datos afines", df)
    return df


COMMANDS = {
    "convergence": cmd_convergence,
    "condition-sweep": cmd_condition_sweep,
    "condition-scaling": cmd_condition_scaling,
    "geometry-check": cmd_geometry_check,
    "properties": cmd_properties,
    "exactness": cmd_exactness,
}


# ------------------------- CLI -------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config-file", default=None, help="JSON or key=value file (default: data/config.json, ./config.json)")
    common.add_argument("--out", dest="out_dir", default=None, help="Output directory for CSVs and run_log.csv")
    common.add_argument("--dump", action="store_true", help="Write mesh/segments/matrix/coefficients text dumps")
    common.add_argument("--n0", type=int, default=None, help="Cells per axis of the level-0 mesh")
    for key in STAB_FLAGS:
        common.add_argument("--" + key.replace("_", "-"), dest=key, type=float, default=None)

    ap = argparse.ArgumentParser(description="Stabilized cutDG bulk-surface experiments with CSV output.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convergence", parents=[common], help="EOC study")
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--ablate-ghost", action="store_true", help="Set μ_Γ = τ_Ω = τ_Γ = 0")

    p = sub.add_parser("condition-sweep", parents=[common], help="κ(𝒜) across surface positions")
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--positions", type=int, default=None)
    p.add_argument("--config", default="full", choices=list(GHOST_CONFIGS) + ["all"])
    p.add_argument("--scaling", default=None, choices=list(SCALING_MODES),
                   help="Surface-block rescaling before κ: D A D (symmetric) or h^{1/2} rows (one-sided)")

    p = sub.add_parser("condition-scaling", parents=[common], help="κ(𝒜) against h")
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--scaling", default=None, choices=list(SCALING_MODES))

    p = sub.add_parser("geometry-check", parents=[common], help="Geometric assumptions on Γ^h")
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--samples", type=int, default=None, help="Samples per surface segment")

    p = sub.add_parser("properties", parents=[common], help="Coercivity / equivalence / Poincaré across δ")
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--positions", type=int, default=None)

    p = sub.add_parser("exactness", parents=[common], help="Affine data reproduced exactly")
    p.add_argument("--levels", type=int, default=None)
    return ap


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = _overrides(args)
        # condition-scaling usa su propio número de niveles
        if args.command == "condition-scaling":
            overrides.pop("levels", None)
        cfg = resolve_config(overrides, args.config_file)
        params = stabilization_from(cfg)
        out = output_dir(cfg)
        debug = config_debug()
        if debug["error"]:
            print(f"⚠️  {debug['path']} no se pudo leer ({debug['error']}); se usan los valores por defecto",
                  file=sys.stderr)
        add_log(args.command, None, "inicio", out)
        add_log(args.command, None, f"config: {config_path() or 'valores por defecto'}", out)
        COMMANDS[args.command](args, cfg, params, out)
        add_log(args.command, None, "fin", out)
        print_outputs(out)
    except CutDGError as e:
        print(f"ERROR ({type(e).__name__}): {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
