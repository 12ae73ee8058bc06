"""
Image feature extractors for KID and the perceptual-distance proxy.

Extractors register by name. The bundled ``toy`` extractor is a fixed
random convolutional projection plus an intensity histogram; real
Inception/LPIPS features can be supplied as precomputed feature files::

    u32 count | u32 d | count * d little-endian float32 (row-major)
"""
import logging
import struct
from pathlib import Path
from typing import Callable, Dict, Protocol, Type

import numpy as np
import torch
import torch.nn.functional as F

from src.exceptions import ConfigurationError, DataAccessError, ShapeError
from src.utils.file_operations import FileOperations

logger = logging.getLogger(__name__)

PERCEPTUAL_PROXY_NAME = "lpips-proxy"


class FeatureExtractor(Protocol):
    """Deterministic map from an (N, H, W) image batch to (N, dim) features."""

    name: str
    dim: int

    def embed(self, images: np.ndarray) -> np.ndarray:
        ...


_REGISTRY: Dict[str, Type] = {}


def register_extractor(name: str) -> Callable[[Type], Type]:
    """Class decorator adding an extractor to the registry."""
    def decorator(cls: Type) -> Type:
        if name in _REGISTRY:
            raise ConfigurationError("metrics.extractor", f"'{name}' is already registered")
        _REGISTRY[name] = cls
        return cls
    return decorator


def available_extractors() -> list:
    return sorted(_REGISTRY)


def get_extractor(name: str, **kwargs) -> FeatureExtractor:
    """
    Instantiate a registered extractor.

    Raises:
        ConfigurationError: Unknown name
    """
    if name not in _REGISTRY:
        raise ConfigurationError(
            "metrics.extractor", f"unknown extractor '{name}' (available: {', '.join(available_extractors())})"
        )
    return _REGISTRY[name](**kwargs)


@register_extractor("toy")
class ToyFeatureExtractor:
    """
    Seeded random 5x5 convolutions (ReLU, global mean and max pooling)
    concatenated with a 16-bin intensity histogram over [-1, 1].

    ``dim = 2 * n_filters + n_bins`` (48 with the defaults).
    """

    name = "toy"

    def __init__(self, n_filters: int = 16, n_bins: int = 16, kernel_size: int = 5, seed: int = 0):
        gen = torch.Generator().manual_seed(seed)
        weight = torch.randn((n_filters, 1, kernel_size, kernel_size), generator=gen, dtype=torch.float64)
        self.weight = weight / kernel_size
        self.n_bins = n_bins
        self.dim = 2 * n_filters + n_bins

    def _histograms(self, images: np.ndarray) -> np.ndarray:
        clipped = np.clip(images, -1.0, 1.0).reshape(images.shape[0], -1)
        edges = np.linspace(-1.0, 1.0, self.n_bins + 1)
        counts = np.stack([np.histogram(row, bins=edges)[0] for row in clipped])
        return counts / clipped.shape[1]

    def embed(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 2:
            images = images[None]
        if images.ndim != 3:
            raise ShapeError("images", "(N, H, W)", images.shape)
        with torch.no_grad():
            x = torch.from_numpy(images).unsqueeze(1)
            response = F.relu(F.conv2d(x, self.weight, padding=self.weight.shape[-1] // 2))
            pooled = torch.cat([response.mean(dim=(2, 3)), response.amax(dim=(2, 3))], dim=1)
        return np.concatenate([pooled.numpy(), self._histograms(images)], axis=1)


def perceptual_distance(a: np.ndarray, b: np.ndarray, extractor: FeatureExtractor) -> float:
    """
    ``|f(a) - f(b)| / sqrt(d)`` under ``extractor``.

    Symmetric, non-negative, zero iff the features coincide. With the toy
    extractor this is the "lpips-proxy" metric.

    Raises:
        ShapeError: If the images differ in size
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError("perceptual pair", a.shape, b.shape)
    fa, fb = extractor.embed(np.stack([a, b]))
    return float(np.linalg.norm(fa - fb) / np.sqrt(extractor.dim))


def mean_perceptual_distance(
    real: np.ndarray,
    gen: np.ndarray,
    extractor: FeatureExtractor,
    n_pairs: int,
    rng: np.random.Generator
) -> float:
    """Average distance over ``n_pairs`` random (real, generated) pairs."""
    fr = extractor.embed(real)
    fg = extractor.embed(gen)
    ri = rng.integers(0, fr.shape[0], n_pairs)
    gi = rng.integers(0, fg.shape[0], n_pairs)
    return float(np.mean(np.linalg.norm(fr[ri] - fg[gi], axis=1) / np.sqrt(extractor.dim)))


_FEATURE_HEADER = struct.Struct("<II")


def write_feature_file(path: Path, features: np.ndarray) -> None:
    """Write an (n, d) matrix in the external feature layout."""
    features = np.ascontiguousarray(np.asarray(features, dtype="<f4"))
    if features.ndim != 2:
        raise ShapeError("features", "(n, d)", features.shape)
    payload = _FEATURE_HEADER.pack(*features.shape) + features.tobytes()
    FileOperations.write_bytes_atomic(Path(path), payload)


def read_feature_file(path: Path) -> np.ndarray:
    """
    Read precomputed features.

    Raises:
        DataAccessError: Truncated or oversized file
    """
    payload = Path(path).read_bytes()
    if len(payload) < _FEATURE_HEADER.size:
        raise DataAccessError(f"Feature file '{path}' is truncated")
    count, dim = _FEATURE_HEADER.unpack_from(payload)
    expected = _FEATURE_HEADER.size + 4 * count * dim
    if len(payload) != expected:
        raise DataAccessError(f"Feature file '{path}' has {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f4", offset=_FEATURE_HEADER.size)
    return data.reshape(count, dim).astype(np.float64)
