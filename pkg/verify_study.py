#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Passive verification script for the cutDG study outputs.

Features:
- Read-only checks of the CSVs written by cutdg.py (no recomputation)
- Acceptance bands for convergence, ablation, condition scaling/robustness,
  geometry slopes, property constants and exactness
- HTML report with semaphores, notes and recommendations
- Per-check CSV export
- --open to launch the HTML report

Usage (examples):
  python verify_study.py --data-dir data --strict
  python verify_study.py --data-dir data --html reports/verify_study.html --checks-csv reports/checks.csv --open
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import webbrowser
from datetime import datetime
from html import escape

import numpy as np
import pandas as pd

KAPPA_SENTINEL = 1e300


# ------------------------- Generic helpers -------------------------
def read_table(path):
    try:
        if not os.path.exists(path):
            return None
        return pd.read_csv(path, encoding="utf-8")
    except Exception:
        return None


def add_check(checks, name, source, value, band, ok):
    checks.append({
        "check": name,
        "file": source,
        "value": "" if value is None or (isinstance(value, float) and math.isnan(value)) else f"{value:.6g}",
        "band": band,
        "status": "ok" if ok else "fail",
    })


def add_missing(checks, name, source):
    checks.append({"check": name, "file": source, "value": "", "band": "", "status": "missing"})


def last_two_mean(series):
    """Media de las dos últimas filas; NaN si falta alguna (un nivel final fallido no se salta)."""
    v = pd.to_numeric(series, errors="coerce").to_numpy()[-2:]
    if v.size < 2 or not np.all(np.isfinite(v)):
        return math.nan
    return float(np.mean(v))


# ------------------------- Checks -------------------------
def check_convergence(data_dir, checks, issues, notes):
    src = "convergence.csv"
    df = read_table(os.path.join(data_dir, src))
    if df is None:
        add_missing(checks, "convergence", src)
        notes.append(f"{src} no encontrado: ejecutar 'cutdg.py convergence'.")
        return
    bands = {"eoc_h1_bulk": (0.85, 1.15), "eoc_h1_surf": (0.85, 1.15),
             "eoc_l2_bulk": (1.8, 2.2), "eoc_l2_surf": (1.8, 2.2)}
    for col, (lo, hi) in bands.items():
        m = last_two_mean(df.get(col, pd.Series(dtype=float)))
        ok = lo <= m <= hi
        add_check(checks, f"mean last two {col}", src, m, f"[{lo}, {hi}]", ok)
        if math.isnan(m):
            issues.append(f"{col}: falta el EOC de alguno de los dos últimos niveles (fallo del solver)")
        elif not ok:
            issues.append(f"{col}: media de los dos últimos EOC = {m:.3f} fuera de [{lo}, {hi}]")
    if len(df) < 5:
        notes.append(f"{src}: sólo {len(df)} niveles (la banda de aceptación asume 5).")


def check_ablation(data_dir, checks, issues, notes):
    src = "convergence_ablated.csv"
    df = read_table(os.path.join(data_dir, src))
    if df is None:
        add_missing(checks, "ablation", src)
        notes.append(f"{src} no encontrado: ejecutar 'cutdg.py convergence --ablate-ghost'.")
        return
    eocs = df[[c for c in df.columns if c.startswith("eoc_")]].apply(pd.to_numeric, errors="coerce")
    errs = df[[c for c in df.columns if c.startswith("err_")]].apply(pd.to_numeric, errors="coerce")
    min_eoc = float(np.nanmin(eocs.to_numpy())) if eocs.notna().any().any() else math.nan
    failed = bool(errs.isna().any().any())
    ok = failed or (not math.isnan(min_eoc) and min_eoc <= 0.0)
    add_check(checks, "ablation: EOC <= 0 or solver failure", src, min_eoc, "min EOC <= 0 | fallo", ok)
    if not ok:
        issues.append(f"Ablación sin deterioro visible: EOC mínimo {min_eoc:.3f} > 0 y sin fallos del solver")


def check_condition_scaling(data_dir, checks, issues, notes):
    src = "condition_scaling.csv"
    df = read_table(os.path.join(data_dir, src))
    if df is None:
        add_missing(checks, "condition scaling", src)
        notes.append(f"{src} no encontrado: ejecutar 'cutdg.py condition-scaling'.")
        return
    ok_rows = df[pd.to_numeric(df["kappa"], errors="coerce") < KAPPA_SENTINEL]
    slope = math.nan
    if len(ok_rows) >= 2:
        slope = float(np.polyfit(np.log(ok_rows["h"]), np.log(ok_rows["kappa"]), 1)[0])
    ok = -2.5 <= slope <= -1.6
    add_check(checks, "slope log κ vs log h", src, slope, "[-2.5, -1.6]", ok)
    if not ok:
        issues.append(f"Pendiente de κ frente a h = {slope:.3f} fuera de [-2.5, -1.6]")


def check_condition_sweep(data_dir, checks, issues, notes):
    src = "condition.csv"
    df = read_table(os.path.join(data_dir, src))
    if df is None:
        add_missing(checks, "condition sweep", src)
        notes.append(f"{src} no encontrado: ejecutar 'cutdg.py condition-sweep --config all'.")
        return
    for config, sub in df.groupby("config", sort=False):
        kappa = pd.to_numeric(sub["kappa"], errors="coerce").to_numpy()
        ratio = float(kappa.max() / kappa.min())
        if config == "full":
            ok = ratio <= 10.0
            add_check(checks, f"κ max/min ({config})", src, ratio, "<= 10", ok)
            if not ok:
                issues.append(f"Condición no robusta con estabilización completa: max/min κ = {ratio:.3e}")
        else:
            ok = ratio >= 100.0
            add_check(checks, f"κ max/min ({config})", src, ratio, ">= 100", ok)
            if not ok:
                issues.append(f"Configuración '{config}': max/min κ = {ratio:.3e} < 100")
        d = pd.to_numeric(sub["delta"], errors="coerce").to_numpy()
        k0, k1 = kappa[np.argmin(d)], kappa[np.argmax(d)]
        if d.max() == 1.0 and d.min() == 0.0 and k0 < KAPPA_SENTINEL and k1 < KAPPA_SENTINEL:
            rel = abs(k1 - k0) / k0
            ok = rel <= 1e-6
            add_check(checks, f"periodicity δ=0 vs δ=1 ({config})", src, rel, "<= 1e-6", ok)
            if not ok:
                issues.append(f"'{config}': κ(δ=0) y κ(δ=1) difieren (rel {rel:.2e})")
    if set(df["config"]) == {"full"}:
        notes.append("condition.csv sólo contiene 'full': las configuraciones ablacionadas no se han verificado.")


def check_properties(data_dir, checks, issues, notes):
    src = "properties.csv"
    df = read_table(os.path.join(data_dir, src))
    if df is None:
        add_missing(checks, "properties", src)
        notes.append(f"{src} no encontrado: ejecutar 'cutdg.py properties' y 'cutdg.py geometry-check'.")
        return
    summary = df[pd.to_numeric(df["delta"], errors="coerce").isna()]
    passed = summary["pass"].astype(str).str.lower().isin(["true", "1"])
    values = dict(zip(summary["name"], pd.to_numeric(summary["constant"], errors="coerce")))
    flags = dict(zip(summary["name"], passed))
    required = ["coercivity_spread", "ghost_equivalence_spread", "poincare_spread", "cg_iterations_spread",
                "geometry_dist_slope", "geometry_normal_slope", "surface_length_slope", "disk_area_slope"]
    for name in required:
        if name not in flags:
            add_missing(checks, name, src)
            notes.append(f"{src}: falta la fila '{name}'.")
            continue
        add_check(checks, name, src, values[name], "pass flag", bool(flags[name]))
        if not flags[name]:
            issues.append(f"Propiedad '{name}' no superada (constante {values[name]:.4g})")
    ablated = [n for n in ("ghost_equivalence_no_jbulk_spread", "poincare_no_jsurf_spread") if n in values]
    if ablated:
        best = max(values[n] for n in ablated)
        ok = best >= 100.0
        add_check(checks, "ablated constants: max spread", src, best, ">= 100", ok)
        if not ok:
            issues.append(f"Sin j_Ω/j_Γ ninguna constante varía >= 100 a lo largo del barrido (máx {best:.3g})")


def check_exactness(data_dir, checks, issues, notes):
    src = "exactness.csv"
    df = read_table(os.path.join(data_dir, src))
    if df is None:
        add_missing(checks, "exactness", src)
        notes.append(f"{src} no encontrado: ejecutar 'cutdg.py exactness'.")
        return
    errs = df[[c for c in df.columns if c.startswith("err_")]].apply(pd.to_numeric, errors="coerce")
    worst = float(errs.to_numpy().max()) if errs.notna().all().all() else math.nan
    ok = worst <= 1e-9
    add_check(checks, "affine data: max error", src, worst, "<= 1e-9", ok)
    if not ok:
        issues.append(f"Datos afines no reproducidos: error máximo {worst:.3e}")


# ------------------------- Summary & recommendations -------------------------
def compute_stats(checks):
    stats = {"total": len(checks), "ok": 0, "fail": 0, "missing": 0}
    for c in checks:
        stats[c["status"]] += 1
    return stats


def build_recommendations(checks, issues, notes):
    recs = []
    for c in checks:
        if c["status"] == "missing":
            recs.append(f"{c['file']}: generar con cutdg.py antes de verificar.")
        if c["status"] == "fail" and c["check"].startswith("mean last two"):
            recs.append("EOC fuera de banda → aumentar --levels o revisar la cuadratura de errores.")
        if c["status"] == "fail" and c["check"].startswith("κ max/min (full)"):
            recs.append("κ sensible a δ con estabilización completa → revisar los conjuntos de caras fantasma.")
        if c["status"] == "fail" and c["check"].startswith("periodicity"):
            recs.append("δ=0 y δ=1 no coinciden → revisar la caja extendida del barrido.")
    for msg in issues:
        if "Datos afines" in msg:
            recs.append("Exactitud fallida → revisar términos de consistencia y signos de las co-normales.")
    # dedupe
    seen, unique = set(), []
    for r in recs:
        if r not in seen:
            unique.append(r)
            seen.add(r)
    return unique


# ------------------------- HTML rendering -------------------------
def render_html(data_dir, issues, notes, checks, out_path, recs=None, csv_path=None, stats=None):
    css = (
        "body{font-family:system-ui,Segoe UI,Roboto; background:#0b1020; color:#e5e7eb; margin:0}"
        ".wrap{max-width:1100px;margin:40px auto;padding:0 20px}"
        "h1{font-size:24px} h2{font-size:18px;margin-top:24px}"
        "table{width:100%;border-collapse:collapse;margin-top:12px}"
        "th,td{border:1px solid #1f2937;padding:8px 10px;text-align:left}"
        "th{background:#111826} a{color:#93c5fd}"
        ".small{color:#cbd5e1;font-size:12px} .chart{margin:12px 0}"
    )
    title = '✅ Verificación OK' if not issues else '⚠️ Incidencias detectadas'
    icon = {"ok": "✅", "fail": "⚠️", "missing": "—"}

    html = []
    html.append("<!doctype html><html lang='es'><head><meta charset='utf-8'>")
    html.append(f"<title>Verificación cutDG | {escape(data_dir)}</title><style>{css}</style></head><body>")
    html.append("<div class='wrap'>")
    html.append(f"<h1>{escape(title)}</h1>")
    html.append(f"<div class='small'>Datos: <strong>{escape(data_dir)}</strong> · Fecha: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}</div>")
    if csv_path:
        html.append(f"<p class='small'>CSV de comprobaciones: <a href='{escape(csv_path)}'>{escape(csv_path)}</a></p>")

    if stats and stats.get("total", 0) > 0:
        vals = [stats["ok"], stats["fail"], stats["missing"]]
        cols = ["#16a34a", "#f59e0b", "#374151"]
        total_val = sum(vals) or 1
        x, parts = 0.0, []
        for v, c in zip(vals, cols):
            w = 100 * v / total_val
            parts.append(f"<rect x='{x:.2f}%' y='0' width='{w:.2f}%' height='16' fill='{c}'></rect>")
            x += w
        html.append("<h2>Gráfico rápido</h2>")
        html.append("<div class='chart'><svg viewBox='0 0 100 16' preserveAspectRatio='none'>" + "".join(parts) + "</svg>"
                    f"<div class='small'>OK: {stats['ok']} · Fallidas: {stats['fail']} · Sin datos: {stats['missing']}</div></div>")

    if issues:
        html.append("<h2>Incidencias (⚠️)</h2><ul>")
        for msg in issues:
            html.append(f"<li>⚠️ {escape(msg)}</li>")
        html.append("</ul>")
    else:
        html.append("<h2>Incidencias</h2><p>✅ Sin incidencias.</p>")

    html.append("<h2>Notas (ℹ️)</h2>")
    if notes:
        html.append("<ul>" + "".join(f"<li>ℹ️ {escape(m)}</li>" for m in notes) + "</ul>")
    else:
        html.append("<p>— Ninguna —</p>")

    html.append("<h2>Recomendaciones automáticas</h2>")
    if recs:
        html.append("<ul>" + "".join(f"<li>👉 {escape(m)}</li>" for m in recs) + "</ul>")
    else:
        html.append("<p>— Ninguna —</p>")

    html.append("<h2>Comprobaciones</h2>")
    html.append("<table><thead><tr><th>Estado</th><th>Comprobación</th><th>Fichero</th><th>Valor</th><th>Banda</th></tr></thead><tbody>")
    for c in checks:
        html.append("<tr>"
                    f"<td>{icon[c['status']]}</td><td>{escape(c['check'])}</td><td>{escape(c['file'])}</td>"
                    f"<td>{escape(c['value'])}</td><td>{escape(c['band'])}</td>"
                    "</tr>")
    html.append("</tbody></table>")
    html.append("<hr><p class='small'>Generado por verify_study.py a partir de los CSV de data/</p>")
    html.append("</div></body></html>")

    with open(out_path, 'w', encoding='utf-8') as f:
        f.write("".join(html))


# ------------------------- CSV export -------------------------
def export_checks_csv(checks, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        w = csv.DictWriter(f, fieldnames=["check", "file", "value", "band", "status"])
        w.writeheader()
        for c in checks:
            w.writerow(c)


# ------------------------- Orchestration -------------------------
def run_checks(data_dir):
    issues, notes, checks = [], [], []
    if not os.path.isdir(data_dir):
        issues.append(f"Missing data directory: {data_dir}")
        return issues, notes, checks
    check_convergence(data_dir, checks, issues, notes)
    check_ablation(data_dir, checks, issues, notes)
    check_condition_scaling(data_dir, checks, issues, notes)
    check_condition_sweep(data_dir, checks, issues, notes)
    check_properties(data_dir, checks, issues, notes)
    check_exactness(data_dir, checks, issues, notes)
    return issues, notes, checks


def main(argv=None):
    ap = argparse.ArgumentParser(description='Passive verifier for cutDG study CSVs with HTML report + CSV export.')
    ap.add_argument('--data-dir', default='data', help='Directory with the CSVs written by cutdg.py')
    ap.add_argument('--strict', action='store_true', help='Exit with code 1 if any issues are found')
    ap.add_argument('--html', default=None, help='Path to write an HTML report (e.g., reports/verify_study.html)')
    ap.add_argument('--checks-csv', default=None, help='Path to write the per-check CSV (e.g., reports/checks.csv)')
    ap.add_argument('--open', action='store_true', help='Open the HTML report after generation')
    args = ap.parse_args(argv)

    data_dir = os.path.abspath(args.data_dir)
    issues, notes, checks = run_checks(data_dir)

    print('== cutDG Study Passive Verification ==')
    print(f'Data dir     : {data_dir}')
    print('--------------------------------------------------')
    if issues:
        print(f'Issues ({len(issues)}):')
        for i, msg in enumerate(issues, 1):
            print(f'  [{i}] ⚠️  {msg}')
    else:
        print('No blocking issues found. ✅')
    if notes:
        print(f'Notes ({len(notes)}):')
        for i, msg in enumerate(notes, 1):
            print(f'  [{i}] ℹ️  {msg}')

    recs = build_recommendations(checks, issues, notes)
    stats = compute_stats(checks)

    if args.html:
        out_path = os.path.abspath(args.html)
        os.makedirs(os.path.dirname(out_path), exist_ok=True)
        render_html(data_dir, issues, notes, checks, out_path, recs=recs, csv_path=args.checks_csv, stats=stats)
        print(f'\nHTML report written to: {out_path}')
        if args.open:
            try:
                webbrowser.open(out_path)
            except Exception:
                pass

    if args.checks_csv:
        csv_out = os.path.abspath(args.checks_csv)
        export_checks_csv(checks, csv_out)
        print(f'CSV checks written to: {csv_out}')

    if args.strict and issues:
        raise SystemExit(1)
    else:
        raise SystemExit(0)


if __name__ == '__main__':
    main()
