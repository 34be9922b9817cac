"""Binary container for datasets and checkpoints.

One file format serves both artifact kinds. Byte layout, in order:

  offset 0   8 bytes   magic ``b"SPIKEDF1"``
  offset 8   4 bytes   header length ``H`` as little-endian uint32
  offset 12  H bytes   header: UTF-8 JSON object
  offset 12+H          blob payloads, concatenated in header order

The header object always carries:

  ``format_version``  int, currently 1; readers reject anything else
  ``kind``            string tag ("dataset", "checkpoint")
  ``meta``            application fields (seeds, configs, digests)
  ``blobs``           list of ``{"name": str, "shape": [int, ...]}``

Every blob is a float64 array stored row-major little-endian with no
padding between blobs, so blob ``i`` starts at ``12 + H + 8 * sum of
earlier shape products``. Readers reconstruct arrays from the header
shapes; a payload length that disagrees with the header is an error,
never a truncation.
"""

import json
import struct
from typing import Mapping, Sequence

import numpy as np

from .errors import FormatError

MAGIC = b"SPIKEDF1"
FORMAT_VERSION = 1

_BLOB_DTYPE = np.dtype("<f8")


def write_archive(
    path,
    kind: str,
    meta: Mapping,
    blobs: Sequence[tuple[str, np.ndarray]],
) -> None:
    """Write ``blobs`` (ordered name/array pairs) plus ``meta`` to ``path``."""
    records = []
    payloads = []
    seen = set()
    for name, arr in blobs:
        if name in seen:
            raise FormatError(f"duplicate blob name {name!r}")
        seen.add(name)
        arr = np.asarray(arr, dtype=np.float64)
        records.append({"name": name, "shape": list(arr.shape)})
        payloads.append(np.ascontiguousarray(arr).astype(_BLOB_DTYPE).tobytes())
    header = json.dumps(
        {
            "format_version": FORMAT_VERSION,
            "kind": kind,
            "meta": dict(meta),
            "blobs": records,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for chunk in payloads:
            fh.write(chunk)


def read_archive(path, kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    """Read an archive back; returns (meta, name -> array).

    Rejects wrong magic, unknown format versions, a mismatched ``kind``
    tag, and payloads whose length disagrees with the header.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not a spike-diffuser archive")
    if len(raw) < len(MAGIC) + 4:
        raise FormatError(f"{path}: truncated header")
    (hlen,) = struct.unpack_from("<I", raw, len(MAGIC))
    hstart = len(MAGIC) + 4
    if len(raw) < hstart + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[hstart : hstart + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed header: {exc}") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(
            f"{path}: format version {version!r} not supported (expected {FORMAT_VERSION})"
        )
    if header.get("kind") != kind:
        raise FormatError(
            f"{path}: archive kind {header.get('kind')!r}, expected {kind!r}"
        )
    arrays: dict[str, np.ndarray] = {}
    offset = hstart + hlen
    for rec in header["blobs"]:
        shape = tuple(int(s) for s in rec["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * _BLOB_DTYPE.itemsize
        if offset + nbytes > len(raw):
            raise FormatError(f"{path}: blob {rec['name']!r} extends past end of file")
        flat = np.frombuffer(raw, dtype=_BLOB_DTYPE, count=count, offset=offset)
        arrays[rec["name"]] = flat.reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after blobs")
    return header["meta"], arrays
