"""
Pydantic models for slices, condition tokens and lesion shape descriptors.
"""
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ConditionToken(BaseModel):
    """Axial bin + pathology pair, flattened as ``z_bin + pathology * n_z``."""

    z_bin: int = Field(..., ge=0, description="Axial bin index in [0, n_z)")
    pathology: int = Field(..., ge=0, le=1, description="1 for lesion slices, 0 for controls")
    n_z: int = Field(default=30, ge=1, description="Number of axial bins")

    model_config = ConfigDict(frozen=True, json_schema_extra={
        "example": {"z_bin": 5, "pathology": 1, "n_z": 30}
    })

    @model_validator(mode='after')
    def validate_bin(self) -> "ConditionToken":
        """z_bin must index one of the n_z bins."""
        if self.z_bin >= self.n_z:
            raise ValueError(f"z_bin {self.z_bin} must be < n_z {self.n_z}")
        return self

    @property
    def token(self) -> int:
        """Flat token index in [0, 2 * n_z)."""
        return self.z_bin + self.pathology * self.n_z


class SliceRecord(BaseModel):
    """One axial slice with its lesion mask, both normalized to [-1, 1]."""

    subject_id: str = Field(..., min_length=1)
    z_index: int = Field(..., ge=0)
    z_total: int = Field(..., ge=1)
    z_bin: int = Field(..., ge=0)
    pathology: int = Field(..., ge=0, le=1)
    image: np.ndarray = Field(..., description="H x W float32 image in [-1, 1]")
    mask: np.ndarray = Field(..., description="H x W float32 mask with values in {-1, +1}")
    token: Optional[int] = Field(default=None, description="Conditioning token of generated slices")

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_validator('image', 'mask')
    @classmethod
    def validate_plane(cls, v: np.ndarray) -> np.ndarray:
        """Payloads are 2-D float32 planes."""
        v = np.asarray(v, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError(f"expected an H x W array, got shape {v.shape}")
        return v

    @model_validator(mode='after')
    def validate_consistency(self) -> "SliceRecord":
        """Shape agreement, image range, binary masks, pathology flag and z range."""
        if self.image.shape != self.mask.shape:
            raise ValueError(f"image {self.image.shape} and mask {self.mask.shape} differ in shape")
        if not np.all(np.isfinite(self.image)):
            raise ValueError("image contains non-finite values")
        if self.image.min() < -1.0 or self.image.max() > 1.0:
            raise ValueError(
                f"image values must lie in [-1, 1], got [{self.image.min():.4g}, {self.image.max():.4g}]"
            )
        if not np.all((self.mask == 1.0) | (self.mask == -1.0)):
            raise ValueError("mask values must be exactly -1 or +1")
        has_lesion = bool(np.any(self.mask == 1.0))
        if has_lesion != bool(self.pathology):
            raise ValueError(
                f"pathology={self.pathology} disagrees with mask (lesion pixels present: {has_lesion})"
            )
        if self.z_index >= self.z_total:
            raise ValueError(f"z_index {self.z_index} must be < z_total {self.z_total}")
        return self

    @property
    def key(self) -> tuple:
        """Uniqueness key inside an archive."""
        return (self.subject_id, self.z_index)

    def condition(self, n_z: int) -> ConditionToken:
        """Condition token of this slice."""
        return ConditionToken(z_bin=self.z_bin, pathology=self.pathology, n_z=n_z)

    def joint(self) -> np.ndarray:
        """Stacked 2 x H x W joint sample."""
        return np.stack([self.image, self.mask]).astype(np.float32)


SHAPE_FEATURE_NAMES: List[str] = [
    "area",
    "perimeter",
    "circularity",
    "solidity",
    "extent",
    "eccentricity",
    "major_axis",
    "minor_axis",
    "equivalent_diameter",
]


class ShapeFeatures(BaseModel):
    """The nine morphological descriptors of one lesion instance."""

    area: float = Field(..., gt=0, description="Pixel count (px^2)")
    perimeter: float = Field(..., ge=0, description="Traced 8-connected contour length (px)")
    circularity: float = Field(..., gt=0, description="4*pi*A / P^2")
    solidity: float = Field(..., gt=0, le=1.0 + 1e-9, description="A / convex hull area")
    extent: float = Field(..., gt=0, le=1.0 + 1e-9, description="A / bounding box area")
    eccentricity: float = Field(..., ge=0, lt=1.0, description="Moment-ellipse eccentricity")
    major_axis: float = Field(..., ge=0, description="4 * sqrt(lambda_1) (px)")
    minor_axis: float = Field(..., ge=0, description="4 * sqrt(lambda_2) (px)")
    equivalent_diameter: float = Field(..., gt=0, description="sqrt(4A / pi) (px)")
    degenerate: bool = Field(default=False, description="Minor axis or perimeter hit the documented floor")

    @model_validator(mode='after')
    def validate_axes(self) -> "ShapeFeatures":
        """minor_axis <= major_axis."""
        if self.minor_axis > self.major_axis + 1e-9:
            raise ValueError(f"minor_axis {self.minor_axis} exceeds major_axis {self.major_axis}")
        return self

    def as_vector(self) -> np.ndarray:
        """Descriptors in ``SHAPE_FEATURE_NAMES`` order."""
        return np.array([getattr(self, name) for name in SHAPE_FEATURE_NAMES], dtype=np.float64)

    def as_dict(self) -> Dict[str, float]:
        """Descriptors keyed by name."""
        return {name: getattr(self, name) for name in SHAPE_FEATURE_NAMES}
