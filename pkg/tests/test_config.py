from __future__ import annotations

import os

import pandas as pd
import pytest

from lib.config import (
    BASE_DIR,
    DEFAULTS,
    config_debug,
    config_path,
    load_config,
    output_dir,
    resolve_config,
    stabilization_from,
)
from lib.errors import ConfigurationError
from lib.runlog import LOG_COLUMNS, add_log, format_ts_madrid, last_modified, read_csv_safe


def _write(tmp_path, name: str, text: str) -> str:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


# ------------------------------------------------------------------
# Lectura tolerante
# ------------------------------------------------------------------
def test_load_strict_json(tmp_path) -> None:
    path = _write(tmp_path, "config.json", '{"levels": 4, "mu_surf": 20.0}')
    assert load_config(path) == {"levels": 4, "mu_surf": 20.0}
    assert config_path() == path
    assert config_debug()["error"] == ""


def test_load_json_with_comments_and_trailing_commas(tmp_path) -> None:
    text = """{
        // niveles de refinamiento
        "levels": 3,
        /* barrido */
        "positions": 11,
    }"""
    assert load_config(_write(tmp_path, "config.json", text)) == {"levels": 3, "positions": 11}


def test_load_key_value_file(tmp_path) -> None:
    text = "levels = 3\nn0=4   # celdas por eje\n\nout_dir = 'resultados'\n"
    assert load_config(_write(tmp_path, "mi_config.txt", text)) == {"levels": "3", "n0": "4", "out_dir": "resultados"}


def test_garbage_config_is_reported_not_raised(tmp_path) -> None:
    path = _write(tmp_path, "config.json", "esto no es una configuración\n")
    assert load_config(path) == {}
    dbg = config_debug()
    assert dbg["path"] == path
    assert "clave=valor" in dbg["error"]
    assert dbg["raw_preview"].startswith("esto no es")


def test_missing_explicit_file_yields_empty_config(tmp_path) -> None:
    assert load_config(str(tmp_path / "no_existe.json")) == {}
    assert config_debug()["error"] != ""


# ------------------------------------------------------------------
# Resolución por capas
# ------------------------------------------------------------------
def test_defaults_file_and_overrides(tmp_path) -> None:
    path = _write(tmp_path, "config.json", '{"levels": 3, "n0": 4, "desconocida": 1}')
    assert resolve_config(use_file=False) == DEFAULTS
    cfg = resolve_config({"levels": 4, "n0": None}, path)
    assert cfg["levels"] == 4
    assert cfg["n0"] == 4
    assert "desconocida" not in cfg
    assert cfg["mu_bulk"] == DEFAULTS["mu_bulk"]


def test_values_are_coerced_to_the_default_types(tmp_path) -> None:
    path = _write(tmp_path, "c.txt", "levels = 3.0\ngamma_bulk = 20\ndump_mesh = sí\n")
    cfg = resolve_config(path=path)
    assert cfg["levels"] == 3 and isinstance(cfg["levels"], int)
    assert cfg["gamma_bulk"] == 20.0 and isinstance(cfg["gamma_bulk"], float)
    assert cfg["dump_mesh"] is True


@pytest.mark.parametrize("key,value", [("levels", "tres"), ("levels", 2.5), ("dump_mesh", "quizá"), ("tau_bulk", "x")])
def test_invalid_values_raise(key, value) -> None:
    with pytest.raises(ConfigurationError):
        resolve_config({key: value}, use_file=False)


def test_stabilization_parameters_from_config() -> None:
    params = stabilization_from(resolve_config({"mu_surf": 10.0}, use_file=False))
    assert params.mu_surf == 10.0
    assert params.gamma_bulk == DEFAULTS["gamma_bulk"]
    with pytest.raises(ConfigurationError):
        stabilization_from(resolve_config({"c_surf": 0.0}, use_file=False))


def test_output_dir_is_created(tmp_path) -> None:
    target = tmp_path / "salida" / "anidada"
    assert output_dir({"out_dir": str(target)}) == str(target)
    assert target.is_dir()
    assert output_dir({"out_dir": "data"}) == os.path.join(BASE_DIR, "data")


# ------------------------------------------------------------------
# Log de ejecución
# ------------------------------------------------------------------
def test_run_log_appends_rows(tmp_path) -> None:
    add_log("convergencia", 0, "N=120", str(tmp_path))
    add_log("convergencia", None, "fin", str(tmp_path))
    df = read_csv_safe(str(tmp_path / "run_log.csv"))
    assert list(df.columns) == LOG_COLUMNS
    assert df["accion"].tolist() == ["convergencia", "convergencia"]
    assert df["mensaje"].tolist() == ["N=120", "fin"]
    assert pd.isna(df["nivel"].iloc[1])
    assert last_modified(str(tmp_path / "run_log.csv")) != "—"


def test_run_log_never_raises(tmp_path) -> None:
    missing = tmp_path / "no" / "existe"
    add_log("convergencia", 1, "x", str(missing))
    assert not missing.exists()
    assert read_csv_safe(str(missing / "run_log.csv")) is None
    assert last_modified(str(missing / "run_log.csv")) == "—"


def test_madrid_timestamps() -> None:
    assert format_ts_madrid(0) == "01/01/1970 01:00:00"
    assert format_ts_madrid(0, with_seconds=False) == "01/01/1970 01:00"
