"""Deterministic JSON and CSV writers"""
import csv
import dataclasses
import enum
import io
import json
import math
from typing import Any, Iterable, List, Optional, Sequence, TextIO

import numpy as np


def format_float(value: float) -> str:
    """17 significant digits, always recognizable as a float"""
    text = format(value, '.17g')
    if all(ch not in text for ch in '.en'):
        text += '.0'
    return text


def _normalize(value: Any) -> Any:
    if hasattr(value, 'to_dict') and callable(value.to_dict):
        return _normalize(value.to_dict())
    if isinstance(value, enum.Enum):
        return _normalize(value.value)
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return _normalize(dataclasses.asdict(value))
    if isinstance(value, np.ndarray):
        return _normalize(value.tolist())
    if isinstance(value, np.generic):
        return _normalize(value.item())
    if isinstance(value, dict):
        return {str(key): _normalize(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_normalize(item) for item in value]
    return value


def _encode(value: Any, indent: Optional[int], level: int) -> str:
    if value is None or value is True or value is False:
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            return 'null'
        return format_float(value)
    if isinstance(value, str):
        return json.dumps(value)

    if isinstance(value, dict):
        items = [(json.dumps(key), value[key]) for key in sorted(value)]
        if not items:
            return '{}'
        parts = [f"{key}: {_encode(item, indent, level + 1)}" for key, item in items]
        return _join(parts, '{', '}', indent, level)

    if isinstance(value, list):
        if not value:
            return '[]'
        parts = [_encode(item, indent, level + 1) for item in value]
        return _join(parts, '[', ']', indent, level)

    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _join(parts: List[str], opening: str, closing: str, indent: Optional[int], level: int) -> str:
    if indent is None:
        return opening + ', '.join(parts) + closing
    pad = ' ' * (indent * (level + 1))
    return opening + '\n' + ',\n'.join(pad + part for part in parts) + '\n' + ' ' * (indent * level) + closing


def dump_json(obj: Any, indent: Optional[int] = 2) -> str:
    """Sorted keys, fixed float format, NaN/inf as null"""
    return _encode(_normalize(obj), indent, 0)


def write_csv(stream: TextIO, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([
            format_float(float(item)) if isinstance(item, (float, np.floating)) else item
            for item in row
        ])


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    write_csv(buffer, header, rows)
    return buffer.getvalue()
