"""Single-file checkpoints: JSON header followed by raw float32 tensors.

Layout: magic ``LCKP``, u32 little-endian header length, UTF-8 JSON
header, then the concatenated tensor payload. The header lists each
tensor's name, shape, and byte offset into the payload. Loading a
checkpoint whose first convolution has 3 input channels into a 4-channel
model duplicates the third channel slice (transfer-learning surgery).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from lsbseg.errors import DataError
from lsbseg.network.model import PanopticNet, expand_input_channels

MAGIC = b"LCKP"
FIRST_CONV_KEY = "backbone.stem.0.weight"


def save_checkpoint(
    model: PanopticNet, path: str | Path, epoch: int, schedule_state: dict | None = None
) -> None:
    path = Path(path)
    tensors = []
    payload = bytearray()
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        tensors.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "offset": len(payload),
                "nbytes": arr.nbytes,
            }
        )
        payload.extend(arr.tobytes())
    header = json.dumps(
        {
            "format_version": 1,
            "epoch": epoch,
            "arch": model.arch_config(),
            "schedule": schedule_state,
            "tensors": tensors,
        },
        sort_keys=True,
    ).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(bytes(payload))
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (header, tensors by name)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    (header_len,) = struct.unpack_from("<I", raw, 4)
    header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    base = 8 + header_len
    tensors = {}
    for spec in header["tensors"]:
        start = base + spec["offset"]
        arr = np.frombuffer(raw, dtype="<f4", count=spec["nbytes"] // 4, offset=start)
        tensors[spec["name"]] = arr.reshape(spec["shape"]).copy()
    return header, tensors


def restore_model(path: str | Path) -> tuple[PanopticNet, dict]:
    """Rebuild a model from a checkpoint, expanding a 3-channel first conv
    to 4 channels when needed."""
    header, tensors = load_checkpoint(path)
    model = PanopticNet.from_arch_config(header["arch"])
    state = {}
    for name, arr in tensors.items():
        if (
            name == FIRST_CONV_KEY
            and arr.ndim == 4
            and arr.shape[1] == 3
            and model.backbone.first_conv.in_channels == 4
        ):
            arr = expand_input_channels(arr)
        state[name] = torch.as_tensor(arr)
    missing, unexpected = model.load_state_dict(state, strict=False)
    if unexpected:
        raise DataError(f"checkpoint has unknown tensors: {sorted(unexpected)[:5]}")
    if missing:
        raise DataError(f"checkpoint is missing tensors: {sorted(missing)[:5]}")
    return model, header
