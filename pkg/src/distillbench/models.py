"""ReLU MLP classifiers on top of the autodiff core, plus the checkpoint format."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .datasets import DatasetSplit, seed_stream
from .errors import ContractError, DimensionError, DomainError
from .fsutil import atomic_write_bytes


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_widths: tuple[int, ...]
    num_classes: int
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if not self.hidden_widths:
            raise DomainError("an MLP needs at least one hidden layer")
        if min((self.input_dim, self.num_classes, *self.hidden_widths)) < 1:
            raise DomainError(f"all widths must be >= 1, got {self.widths}")
        if not 0 <= int(self.init_seed) < 2**64:
            raise DomainError("init_seed must be a 64-bit unsigned integer")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.num_classes)

    def with_seed(self, init_seed: int) -> "MlpSpec":
        return MlpSpec(self.input_dim, self.hidden_widths, self.num_classes, init_seed)

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden_widths": list(self.hidden_widths),
                "num_classes": self.num_classes, "init_seed": self.init_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(int(d["input_dim"]), tuple(d["hidden_widths"]), int(d["num_classes"]),
                   int(d.get("init_seed", 0)))


class ModelParams:
    """Ordered ``W0, b0, W1, b1, ...`` tensors of an MLP; ``W`` is [fan_in, fan_out]."""

    def __init__(self, spec: MlpSpec, tensors: dict[str, Tensor], frozen: bool = False):
        self.spec = spec
        self.tensors = dict(tensors)
        self.frozen = frozen
        expected = []
        for i, (fan_in, fan_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
            expected += [(f"W{i}", (fan_in, fan_out)), (f"b{i}", (fan_out,))]
        got = [(k, v.shape) for k, v in self.tensors.items()]
        if got != expected:
            raise DimensionError(f"parameter shapes {got} do not match spec chain {expected}")
        for t in self.tensors.values():
            t.requires_grad = not frozen

    @property
    def num_layers(self) -> int:
        return len(self.spec.widths) - 1

    def layers(self):
        for i in range(self.num_layers):
            yield self.tensors[f"W{i}"], self.tensors[f"b{i}"]

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.tensors.items()}

    def zero_grad(self) -> None:
        ad.zero_grad(self.tensors.values())

    def copy(self, frozen: bool | None = None) -> "ModelParams":
        tensors = {k: Tensor(v.data.copy()) for k, v in self.tensors.items()}
        return ModelParams(self.spec, tensors, self.frozen if frozen is None else frozen)

    def freeze(self) -> "ModelParams":
        return self.copy(frozen=True)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for t in self.tensors.values())

    def equals(self, other: "ModelParams") -> bool:
        return (self.spec == other.spec and self.tensors.keys() == other.tensors.keys()
                and all(np.array_equal(v.data, other.tensors[k].data) for k, v in self.tensors.items()))


def init(spec: MlpSpec) -> ModelParams:
    """Glorot-uniform weights, zero biases, all drawn from ``spec.init_seed``."""
    rng = seed_stream(spec.init_seed)
    tensors: dict[str, Tensor] = {}
    for i, (fan_in, fan_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        tensors[f"W{i}"] = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        tensors[f"b{i}"] = Tensor(np.zeros(fan_out))
    return ModelParams(spec, tensors)


def forward(params: ModelParams, x) -> Tensor:
    """Raw logits. No graph is recorded when ``params`` is frozen and ``x`` is a constant."""
    x = ad.as_tensor(x)
    if x.data.ndim != 2 or x.shape[1] != params.spec.input_dim:
        raise DimensionError(f"input of shape {x.shape} does not fit input_dim {params.spec.input_dim}")
    h = x
    last = params.num_layers - 1
    for i, (w, b) in enumerate(params.layers()):
        h = ad.bias_add(ad.matmul(h, w), b)
        if i < last:
            h = ad.relu(h)
    return h


def logits_numpy(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Graph-free forward pass for evaluation."""
    h = np.asarray(x, dtype=np.float64)
    last = params.num_layers - 1
    for i, (w, b) in enumerate(params.layers()):
        h = h @ w.data + b.data
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def predict(logits: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(logits, axis=1)


def accuracy(params: ModelParams, split: DatasetSplit) -> float:
    if len(split) == 0:
        return 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        logits = logits_numpy(params, split.features)
    return float(np.mean(predict(logits) == split.labels))


_CK_MAGIC = b"DBCK"
_CK_VERSION = 1


def checkpoint_bytes(params: ModelParams) -> bytes:
    """Serialize to the little-endian checkpoint layout.

    magic ``DBCK`` | u32 version | spec echo (u32 input_dim, u32 n_hidden,
    u32 * n_hidden widths, u32 num_classes, u64 init_seed) | u32 n_tensors |
    per tensor: u16 name length, utf-8 name, u8 ndim, u32 * ndim dims,
    float64 row-major data.
    """
    spec = params.spec
    out = [_CK_MAGIC, struct.pack("<I", _CK_VERSION),
           struct.pack("<II", spec.input_dim, len(spec.hidden_widths)),
           struct.pack(f"<{len(spec.hidden_widths)}I", *spec.hidden_widths),
           struct.pack("<IQ", spec.num_classes, spec.init_seed),
           struct.pack("<I", len(params.tensors))]
    for name, t in params.tensors.items():
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack(f"<B{t.data.ndim}I", t.data.ndim, *t.shape))
        out.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(out)


def params_from_bytes(raw: bytes, frozen: bool = True) -> ModelParams:
    if raw[:4] != _CK_MAGIC:
        raise ContractError("not a checkpoint file")
    off = 4
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != _CK_VERSION:
        raise ContractError(f"unsupported checkpoint version {version}")
    input_dim, n_hidden = struct.unpack_from("<II", raw, off)
    off += 8
    hidden = struct.unpack_from(f"<{n_hidden}I", raw, off)
    off += 4 * n_hidden
    num_classes, init_seed = struct.unpack_from("<IQ", raw, off)
    off += 12
    (n_tensors,) = struct.unpack_from("<I", raw, off)
    off += 4
    tensors: dict[str, Tensor] = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
        tensors[name] = Tensor(data.astype(np.float64))
    spec = MlpSpec(input_dim, tuple(hidden), num_classes, init_seed)
    return ModelParams(spec, tensors, frozen=frozen)


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    atomic_write_bytes(path, checkpoint_bytes(params))


def load_checkpoint(path: str | Path, frozen: bool = True) -> ModelParams:
    return params_from_bytes(Path(path).read_bytes(), frozen=frozen)
