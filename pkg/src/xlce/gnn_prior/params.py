"""Parameter container, initialization and the binary checkpoint format."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..numerics import rng_from_seed

CHECKPOINT_MAGIC = b"GNNP"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GnnDims:
    """Width configuration of the network.

    n_u   node feature width (message dimension)
    n_h1  first hidden width; also the GRU state size
    n_h2  second hidden width
    """

    n_u: int = 8
    n_h1: int = 64
    n_h2: int = 32

    @property
    def edge_in(self) -> int:
        """Propagation MLP input: two node features plus 3 edge attributes."""
        return 2 * self.n_u + 3

    @property
    def gru_in(self) -> int:
        """GRU input: summed messages plus the 4 node attributes."""
        return self.n_u + 4


# (name, shape builder) for every learnable tensor, in a fixed order so
# checkpoints and gradient dictionaries always line up.
def _tensor_shapes(d: GnnDims) -> dict[str, tuple[int, ...]]:
    return {
        "w1": (d.n_u, 4),
        "b1": (d.n_u,),
        "p_w1": (d.n_h1, d.edge_in),
        "p_b1": (d.n_h1,),
        "p_w2": (d.n_h2, d.n_h1),
        "p_b2": (d.n_h2,),
        "p_w3": (d.n_u, d.n_h2),
        "p_b3": (d.n_u,),
        "gru_wi": (3 * d.n_h1, d.gru_in),
        "gru_wh": (3 * d.n_h1, d.n_h1),
        "gru_bi": (3 * d.n_h1,),
        "gru_bh": (3 * d.n_h1,),
        "w2": (d.n_u, d.n_h1),
        "b2": (d.n_u,),
        "h_w1": (d.n_h1, d.n_u),
        "h_b1": (d.n_h1,),
        "h_w2": (d.n_h2, d.n_h1),
        "h_b2": (d.n_h2,),
        "h_w3": (1, d.n_h2),
        "h_b3": (1,),
    }


class GnnParams:
    """Named float64 tensors of the prior-updater network.

    One instance is shared by every subarray; all tensors are plain numpy
    arrays accessed as attributes (``params.w1``) or via ``tensors``.
    """

    def __init__(self, tensors: dict[str, np.ndarray], dims: GnnDims):
        expected = _tensor_shapes(dims)
        if set(tensors) != set(expected):
            missing = set(expected) - set(tensors)
            extra = set(tensors) - set(expected)
            raise ValueError(f"tensor set mismatch (missing {missing}, extra {extra})")
        for name, shape in expected.items():
            t = np.ascontiguousarray(tensors[name], dtype=np.float64)
            if t.shape != shape:
                raise ValueError(f"tensor {name} has shape {t.shape}, expected {shape}")
            if not np.all(np.isfinite(t)):
                raise ValueError(f"tensor {name} contains non-finite values")
            tensors[name] = t
        self.tensors = {name: tensors[name] for name in expected}
        self.dims = dims

    def __getattr__(self, name: str) -> np.ndarray:
        try:
            return self.__dict__["tensors"][name]
        except KeyError:
            raise AttributeError(name) from None

    def copy(self) -> "GnnParams":
        return GnnParams({k: v.copy() for k, v in self.tensors.items()}, self.dims)

    def zeros_like(self) -> dict[str, np.ndarray]:
        """Gradient accumulator with the same names and shapes."""
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    @staticmethod
    def dims_from_tensors(tensors: dict[str, np.ndarray]) -> GnnDims:
        try:
            n_u = tensors["w1"].shape[0]
            n_h1 = tensors["p_w1"].shape[0]
            n_h2 = tensors["p_w2"].shape[0]
        except KeyError as exc:
            raise ValueError(f"checkpoint is missing tensor {exc}") from exc
        return GnnDims(n_u=n_u, n_h1=n_h1, n_h2=n_h2)


def _glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_out, fan_in = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(dims: GnnDims = GnnDims(), seed: int = 0) -> GnnParams:
    """Glorot-uniform weights, zero biases.

    The readout output bias starts at 1 so the initial network emits
    precisions near 1 (the same starting point as the classical update),
    keeping the first observation steps well conditioned and the clamp
    gradient alive.
    """
    rng = rng_from_seed(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in _tensor_shapes(dims).items():
        if len(shape) == 2:
            tensors[name] = _glorot(rng, shape)
        else:
            tensors[name] = np.zeros(shape)
    tensors["h_b3"] = np.ones(1)
    return GnnParams(tensors, dims)


def save_checkpoint(path, params: GnnParams) -> None:
    """Write the versioned binary checkpoint.

    Layout: magic "GNNP", version u32, tensor count u32, then for each
    tensor: name length u32, name bytes, rank u32, dims u64 each,
    little-endian float64 payload.
    """
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(params.tensors)))
        for name, tensor in params.tensors.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
            fh.write(tensor.astype("<f8").tobytes())


def load_checkpoint(path) -> GnnParams:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a parameter checkpoint (magic {magic!r})")
        version, count = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
            size = int(np.prod(shape)) if rank else 1
            payload = fh.read(8 * size)
            tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return GnnParams(tensors, GnnParams.dims_from_tensors(tensors))
