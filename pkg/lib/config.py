# lib/config.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import json
import os
import re
from typing import Any, Dict, Mapping, Optional

from lib.errors import ConfigurationError
from lib.forms import StabilizationParams

# ============================================================
# Rutas
# ============================================================
CURRENT_DIR = os.path.abspath(os.path.dirname(__file__))
# Si estamos en lib/, BASE_DIR es el padre; si no, es el propio directorio
if os.path.basename(CURRENT_DIR) in ("lib",):
    BASE_DIR = os.path.abspath(os.path.join(CURRENT_DIR, ".."))
else:
    BASE_DIR = CURRENT_DIR

DATA_DIR = os.path.join(BASE_DIR, "data")


def ensure_dir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except Exception:
        pass
    return path


# ============================================================
# Valores por defecto de los estudios
# ============================================================
DEFAULTS: Dict[str, Any] = {
    # estabilización
    "c_bulk": 1.0,
    "c_surf": 1.0,
    "gamma_bulk": 50.0,
    "gamma_surf": 50.0,
    "mu_bulk": 50.0,
    "mu_surf": 50.0,
    "tau_bulk": 0.01,
    "tau_surf": 0.01,
    # estudios
    "n0": 8,
    "levels": 5,
    "sweep_level": 1,
    "positions": 101,
    "scaling_levels": 4,
    # resolución
    "rel_tol": 1e-10,
    "zero_threshold": 1e-12,
    "dense_limit": 6000,
    "scaling": "symmetric",
    # geometría
    "samples_per_segment": 8,
    # salida
    "out_dir": "data",
    "dump_mesh": False,
}

STABILIZATION_KEYS = tuple(StabilizationParams._fields)

# ====== CONFIG: búsqueda, lectura robusta y depuración ======
_LAST_CONFIG_PATH: Optional[str] = None
_LAST_CONFIG_ERROR: Optional[str] = None
_LAST_CONFIG_RAW: Optional[str] = None


def _config_candidates() -> list[str]:
    # Preferimos data/config.json; si no existe, ./config.json (raíz del proyecto)
    return [
        os.path.join(DATA_DIR, "config.json"),
        os.path.join(BASE_DIR, "config.json"),
        os.path.join(CURRENT_DIR, "config.json"),
    ]


def find_config_file() -> Optional[str]:
    for p in _config_candidates():
        if os.path.isfile(p):
            return p
    return None


def _read_text_try_encodings(path: str) -> tuple[str, str]:
    last_exc = None
    for enc in ("utf-8", "utf-8-sig", "latin-1"):
        try:
            with open(path, "r", encoding=enc) as f:
                return f.read(), enc
        except Exception as e:
            last_exc = e
    if last_exc:
        raise last_exc
    return "", "utf-8"


def _sanitize_json_like(text: str) -> str:
    """Quita comentarios // y /* */, comillas “curvas”, caracteres de control y comas colgantes."""
    text = re.sub(r"//.*?$", "", text, flags=re.MULTILINE)
    text = re.sub(r"/\*.*?\*/", "", text, flags=re.DOTALL)
    text = (text
            .replace("“", '"').replace("”", '"')
            .replace("‘", "'").replace("’", "'"))
    text = re.sub(r"[\x00-\x08\x0B\x0C\x0E-\x1F\x7F]", " ", text)
    text = re.sub(r",\s*(\})", r"\1", text)
    text = re.sub(r",\s*(\])", r"\1", text)
    return text.strip()


def _parse_key_value(text: str) -> dict:
    """Formato 'clave = valor', una por línea; '#' inicia comentario."""
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"línea {n} sin '=': {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip().strip('"').strip("'")
    return out


def load_config(path: Optional[str] = None) -> dict:
    """
    Carga la configuración (JSON o clave=valor). Sin ruta explícita busca
    data/config.json y luego ./config.json. Nunca lanza: ante error devuelve {}
    y deja el motivo en config_debug().
    """
    global _LAST_CONFIG_PATH, _LAST_CONFIG_ERROR, _LAST_CONFIG_RAW
    _LAST_CONFIG_PATH = None
    _LAST_CONFIG_ERROR = None
    _LAST_CONFIG_RAW = None

    path = path or find_config_file()
    if not path:
        return {}

    _LAST_CONFIG_PATH = path
    try:
        raw, enc = _read_text_try_encodings(path)
        _LAST_CONFIG_RAW = raw[:2000]

        # 1º intento: JSON estricto
        try:
            return json.loads(raw)
        except Exception as e1:
            # 2º intento: sanitizar comentarios/comas colgantes
            try:
                return json.loads(_sanitize_json_like(raw))
            except Exception as e2:
                # 3º intento: clave=valor
                try:
                    return _parse_key_value(raw)
                except Exception as e3:
                    _LAST_CONFIG_ERROR = (f"Primero {type(e1).__name__}: {e1}; tras sanitizar "
                                          f"{type(e2).__name__}: {e2}; como clave=valor: {e3}")
                    return {}
    except Exception as e:
        _LAST_CONFIG_ERROR = f"{type(e).__name__}: {e}"
        return {}


def config_path() -> str:
    return _LAST_CONFIG_PATH or ""


def config_debug() -> dict:
    """Datos de depuración de la última carga."""
    return {
        "path": _LAST_CONFIG_PATH or "",
        "error": _LAST_CONFIG_ERROR or "",
        "raw_preview": (_LAST_CONFIG_RAW or "")[:500],
    }


# ============================================================
# Coerción y mezcla de niveles
# ============================================================
_TRUE = {"1", "true", "yes", "si", "sí", "on"}
_FALSE = {"0", "false", "no", "off", ""}


def _coerce(key: str, value: Any, default: Any) -> Any:
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s in _TRUE:
                return True
            if s in _FALSE:
                return False
            raise ValueError(s)
        if isinstance(default, int):
            f = float(value)
            if f != int(f):
                raise ValueError(value)
            return int(f)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"Valor no válido para '{key}': {value!r}") from e


def resolve_config(overrides: Optional[Mapping[str, Any]] = None, path: Optional[str] = None,
                   use_file: bool = True) -> dict:
    """Defaults < fichero < overrides (los None de los overrides se ignoran). Claves desconocidas se descartan."""
    cfg = dict(DEFAULTS)
    layers = []
    if use_file:
        layers.append(load_config(path))
    if overrides:
        layers.append({k: v for k, v in overrides.items() if v is not None})
    for layer in layers:
        if not isinstance(layer, dict):
            continue
        for key, value in layer.items():
            if key in DEFAULTS:
                cfg[key] = _coerce(key, value, DEFAULTS[key])
    return cfg


def stabilization_from(cfg: Mapping[str, Any]) -> StabilizationParams:
    return StabilizationParams(**{k: float(cfg[k]) for k in STABILIZATION_KEYS}).validated()


def output_dir(cfg: Mapping[str, Any]) -> str:
    """out_dir absoluto (relativo a la raíz del proyecto si no lo es) y creado."""
    out = str(cfg.get("out_dir") or DATA_DIR)
    if not os.path.isabs(out):
        out = os.path.join(BASE_DIR, out)
    return ensure_dir(out)
