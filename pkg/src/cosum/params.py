"""Named parameter storage and the CSICKPT1 checkpoint container.

Checkpoint layout: magic string ``CSICKPT1``, an 8-byte little-endian
length, a UTF-8 JSON header ``{"params": [{"name", "shape"}...],
"config": {...}}``, then each tensor's float64 data little-endian in
header order. Header order is sorted by name so identical stores always
serialize to identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from cosum.autodiff import ContractViolation, Tensor

MAGIC = b"CSICKPT1"


class ParamStore:
    """Map of unique names to parameter Tensors plus same-shaped gradients."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._grads: dict[str, np.ndarray] = {}

    def add(self, name: str, tensor: Tensor) -> None:
        if not name:
            raise ContractViolation("parameter name must be non-empty")
        if name in self._params:
            raise ContractViolation(f"duplicate parameter name {name!r}")
        self._params[name] = tensor
        self._grads[name] = np.zeros(tensor.shape, dtype=np.float64)

    def get(self, name: str) -> Tensor:
        return self._params[name]

    def set(self, name: str, tensor: Tensor) -> None:
        if name not in self._params:
            raise KeyError(name)
        if tensor.shape != self._params[name].shape:
            raise ContractViolation(
                f"shape change for {name!r}: {self._params[name].shape} -> {tensor.shape}"
            )
        self._params[name] = tensor

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def set_grad(self, name: str, grad: np.ndarray) -> None:
        expected = self._params[name].shape
        grad = np.asarray(grad, dtype=np.float64)
        if tuple(grad.shape) != expected:
            raise ContractViolation(
                f"gradient shape {grad.shape} != parameter shape {expected} for {name!r}"
            )
        self._grads[name] = grad

    def zero_grads(self) -> None:
        for name, tensor in self._params.items():
            self._grads[name] = np.zeros(tensor.shape, dtype=np.float64)

    def names(self) -> list[str]:
        return sorted(self._params)

    def n_entries(self) -> int:
        return sum(t.size for t in self._params.values())

    def __contains__(self, name: str) -> bool:
        return name in self._params


def save_checkpoint(path: str | Path, store: ParamStore, config: dict) -> None:
    names = store.names()
    header = {
        "params": [{"name": n, "shape": list(store.get(n).shape)} for n in names],
        "config": config,
    }
    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(store.get(n).data.astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ParamStore, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ContractViolation(f"{path}: not a CSICKPT1 checkpoint")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        store = ParamStore()
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ContractViolation(f"{path}: truncated tensor data")
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
            store.add(entry["name"], Tensor(arr))
    return store, header["config"]
