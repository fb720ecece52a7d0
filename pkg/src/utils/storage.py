from __future__ import annotations

import json
import os
import re
from typing import Any, Dict, Optional

import duckdb
import pandas as pd

from .config import Settings, load_settings
from .errors import ArgumentError

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_csv(df: pd.DataFrame, path: str) -> str:
    ensure_dir(os.path.dirname(path) or ".")
    df.to_csv(path, index=False)
    return path


def read_csv(path: str) -> Optional[pd.DataFrame]:
    if not os.path.exists(path):
        return None
    return pd.read_csv(path)


def write_json(data: Any, path: str) -> str:
    ensure_dir(os.path.dirname(path) or ".")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)
    return path


def read_json(path: str) -> Optional[Any]:
    if not os.path.exists(path):
        return None
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def duckdb_conn(settings: Optional[Settings] = None) -> Optional[duckdb.DuckDBPyConnection]:
    s = settings or load_settings()
    if not s.use_duckdb:
        return None
    ensure_dir(os.path.dirname(s.duckdb_path) or ".")
    return duckdb.connect(s.duckdb_path)


def _ident(name: str) -> str:
    if not _IDENT.match(name):
        raise ArgumentError(f"'{name}' is not a usable table or column name")
    return f'"{name}"'


def write_duckdb_table(df: pd.DataFrame, table_name: str, key: Optional[Dict[str, Any]] = None) -> None:
    """Mirror ``df`` into DuckDB.

    Without ``key`` the table is replaced. With ``key`` (e.g. run digest and
    seed) the key columns are prepended and only rows carrying the same key are
    replaced, so every run of a sweep keeps its rows in one table.
    """
    con = duckdb_conn()
    if con is None:
        return
    table = _ident(table_name)
    try:
        if not key:
            con.register("frame", df)
            con.execute(f"CREATE OR REPLACE TABLE {table} AS SELECT * FROM frame")
            return
        keyed = df.drop(columns=[c for c in key if c in df.columns])
        for i, (col, value) in enumerate(key.items()):
            keyed.insert(i, col, value)
        con.register("frame", keyed)
        con.execute(f"CREATE TABLE IF NOT EXISTS {table} AS SELECT * FROM frame LIMIT 0")
        where = " AND ".join(f"{_ident(col)} = ?" for col in key)
        con.execute(f"DELETE FROM {table} WHERE {where}", list(key.values()))
        con.execute(f"INSERT INTO {table} SELECT * FROM frame")
    finally:
        con.close()


def read_duckdb_table(table_name: str) -> Optional[pd.DataFrame]:
    con = duckdb_conn()
    if con is None:
        return None
    try:
        tables = {row[0] for row in con.execute("SHOW TABLES").fetchall()}
        if table_name not in tables:
            return None
        return con.execute(f"SELECT * FROM {_ident(table_name)}").df()
    finally:
        con.close()


def write_table(
    df: pd.DataFrame, path: str, table_name: Optional[str] = None, key: Optional[Dict[str, Any]] = None
) -> str:
    """Write a CSV and mirror it into DuckDB when enabled."""
    write_csv(df, path)
    if table_name:
        write_duckdb_table(df, table_name, key)
    return path
