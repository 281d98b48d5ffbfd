"""Per-party model checkpoints in the pool-file container (tagged tensor sections)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import DimensionError, PoolIOError
from ..preprocessing import read_sections, write_section
from ..ring import RING64, pack, unpack


def checkpoint_path(prefix, party: int) -> Path:
    return Path(f"{prefix}.p{party}.2pcp")


def save_checkpoint(prefix, network: str, params: list[dict], party: int) -> Path:
    path = checkpoint_path(prefix, party)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            for i, layer in enumerate(params):
                for name, arr in sorted(layer.items()):
                    arr = np.asarray(arr, dtype=np.uint64)
                    write_section(fh, "tensor", 1, arr.shape, pack(arr), tag=f"{network}/{i}.{name}")
    except OSError as e:
        raise PoolIOError(f"cannot write checkpoint {path}: {e}") from e
    return path


def load_checkpoint(prefix, net, party: int) -> list[dict]:
    """Load this party's shares and check them against ``net``'s shapes."""
    path = checkpoint_path(prefix, party)
    expected = net.init_params(0)
    params: list[dict] = [{} for _ in net.layers]
    for kind, _count, dims, tag, payload in read_sections(path, RING64):
        if kind != "tensor" or tag is None:
            raise PoolIOError(f"{path}: unexpected {kind} section in a checkpoint")
        name, _, key = tag.partition("/")
        if name != net.name:
            raise DimensionError(f"checkpoint is for network {name}, not {net.name}")
        idx, _, pname = key.partition(".")
        i = int(idx)
        if i >= len(expected) or pname not in expected[i]:
            raise DimensionError(f"checkpoint tensor {tag} does not exist in network {net.name}")
        if tuple(dims) != expected[i][pname].shape:
            raise DimensionError(f"{tag}: shape {dims} != {expected[i][pname].shape}")
        params[i][pname] = unpack(payload, dims, RING64)
    for i, layer in enumerate(expected):
        missing = set(layer) - set(params[i])
        if missing:
            raise DimensionError(f"checkpoint lacks {sorted(missing)} for layer {i}")
    return params
