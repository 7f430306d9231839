"""Binary noise-table files.

Layout (all little-endian): 8-byte magic ``AEENOISE``; uint64 master_seed,
stream_id, domain, n, steps; float64 h; then db and conv as float64 arrays in
(mode, step) order. Only single-replica tables are written.
"""

import logging
from pathlib import Path

import numpy as np

from aee_lab.core.exceptions import InvalidArgumentError
from aee_lab.models.noise import NoiseDomain, NoiseTable

logger = logging.getLogger(__name__)

MAGIC = b"AEENOISE"
HEADER_WORDS = 5


def dump_noise_table(table: NoiseTable, path: Path) -> Path:
    if table.batch_shape:
        raise InvalidArgumentError("Only single-replica tables can be written")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.array([table.master_seed, table.stream_id, int(table.domain), table.n, table.steps], dtype="<u8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(header.tobytes())
        f.write(np.array([table.h], dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(table.db, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(table.conv, dtype="<f8").tobytes())
    logger.debug(f"Wrote noise table ({table.n} x {table.steps}) to {path}")
    return path


def load_noise_table(path: Path) -> NoiseTable:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC or len(raw) < len(MAGIC) + 8 * (HEADER_WORDS + 1):
        raise InvalidArgumentError(f"{path} is not a noise table file")
    offset = len(MAGIC)
    header = np.frombuffer(raw, dtype="<u8", count=HEADER_WORDS, offset=offset)
    offset += 8 * HEADER_WORDS
    master_seed, stream_id, domain, n, steps = (int(x) for x in header)
    h = float(np.frombuffer(raw, dtype="<f8", count=1, offset=offset)[0])
    offset += 8
    size = n * steps
    if len(raw) != offset + 16 * size:
        raise InvalidArgumentError(f"{path} has {len(raw)} bytes, expected {offset + 16 * size}")
    db = np.frombuffer(raw, dtype="<f8", count=size, offset=offset).reshape(n, steps)
    conv = np.frombuffer(raw, dtype="<f8", count=size, offset=offset + 8 * size).reshape(n, steps)
    return NoiseTable(db=db, conv=conv, h=h, master_seed=master_seed,
                      stream_ids=(stream_id,), domain=NoiseDomain(domain))
