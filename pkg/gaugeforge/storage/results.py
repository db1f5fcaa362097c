import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

from pydantic import BaseModel

from gaugeforge.errors import ConfigurationError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12e"


def _jsonable(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return _jsonable(value.model_dump(by_alias=True))
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "item") and callable(value.item):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def dumps(payload: Any) -> str:
    """Sorted-key UTF-8 JSON; non-finite floats become null."""
    return json.dumps(_jsonable(payload), ensure_ascii=False, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: Union[str, Path], payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload), encoding="utf-8")
    return path


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigurationError(f"report file {path} does not exist") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"report file {path} is not valid JSON: {e}") from e


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return FLOAT_FORMAT % value
    if isinstance(value, (list, tuple)):
        return " ".join(_cell(v) for v in value)
    return str(value)


def write_csv(path: Union[str, Path], rows: Iterable[Union[BaseModel, Dict[str, Any]]],
              fields: Sequence[str] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records: List[Dict[str, Any]] = [
        row.model_dump(by_alias=True) if isinstance(row, BaseModel) else dict(row) for row in rows
    ]
    fields = list(fields) or (list(records[0].keys()) if records else [])
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for record in records:
            writer.writerow({k: _cell(record.get(k)) for k in fields})
    logger.debug(f"Wrote {len(records)} rows to {path}")
    return path
