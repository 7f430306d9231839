import hashlib
import json
from typing import Any

import numpy as np
from pydantic import BaseModel


def _plain(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return {key: _plain(v) for key, v in value.__dict__.items()}
    if isinstance(value, np.ndarray):
        return [repr(float(x)) for x in value.ravel()] + [list(value.shape)]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "value"):  # enums
        return value.value
    if isinstance(value, float):
        return repr(value)
    return value


def config_fingerprint(*parts: Any) -> str:
    """Stable short hash of models, arrays and scalars."""
    payload = json.dumps([_plain(p) for p in parts], sort_keys=True, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
