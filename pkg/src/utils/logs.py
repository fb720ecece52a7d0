"""
Line-delimited key=value logging.

Every record renders as a single line such as::

    ts=2024-01-01T10:00:00 level=INFO logger=src.training.trainer event=epoch task=0 epoch=3 lr=0.05

which reads fine in a terminal and splits cleanly on whitespace and ``=``.
"""
from __future__ import annotations

import logging
import sys
from datetime import datetime, timezone
from typing import Any, Optional, TextIO

_FIELDS_ATTR = "fields"


def _fmt_value(value: Any) -> str:
    if isinstance(value, float):
        text = f"{value:.6g}"
    else:
        text = str(value)
    if text == "" or any(ch.isspace() for ch in text) or '"' in text or "=" in text:
        text = '"' + text.replace('"', '\\"') + '"'
    return text


class KeyValueFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        ts = datetime.fromtimestamp(record.created, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%S")
        parts = [
            f"ts={ts}",
            f"level={record.levelname}",
            f"logger={record.name}",
            f"event={_fmt_value(record.getMessage())}",
        ]
        fields = getattr(record, _FIELDS_ATTR, None) or {}
        for key, value in fields.items():
            parts.append(f"{key}={_fmt_value(value)}")
        if record.exc_info:
            parts.append(f"exc={_fmt_value(self.formatException(record.exc_info))}")
        return " ".join(parts)


def configure_logging(level: str = "INFO", stream: Optional[TextIO] = None) -> None:
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_hat_managed", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(KeyValueFormatter())
    handler._hat_managed = True  # type: ignore[attr-defined]
    root.addHandler(handler)
    root.setLevel(level)


def attach_file_log(path: str) -> logging.Handler:
    handler = logging.FileHandler(path, mode="a", encoding="utf-8")
    handler.setFormatter(KeyValueFormatter())
    logging.getLogger().addHandler(handler)
    return handler


def detach_log(handler: logging.Handler) -> None:
    logging.getLogger().removeHandler(handler)
    handler.close()


def log_event(logger: logging.Logger, event: str, level: int = logging.INFO, **fields: Any) -> None:
    logger.log(level, event, extra={_FIELDS_ATTR: fields})
