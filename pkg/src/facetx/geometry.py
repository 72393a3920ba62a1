"""Network geometry shared by every module."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Geometry:
    """Sizes of the desk-scale model.

    ``image_size`` is the side of the square input (4H); the coarse feature
    grid is H×W with H = W = image_size / 4 and N = H·W positions.
    """

    image_size: int = 64
    channels: int = 64        # C, width of the coarsest pyramid level
    feat_dim: int = 64        # d, width of K/Q/S features
    heads: int = 4
    sem_classes: int = 8

    def __post_init__(self):
        if self.image_size % 4 or self.image_size < 4:
            raise ValueError(f"image_size must be a positive multiple of 4, got {self.image_size}")
        if self.channels % 4:
            raise ValueError("channels must be divisible by 4")
        if self.feat_dim % 4:
            raise ValueError("feat_dim must be divisible by 4")
        if self.feat_dim % self.heads:
            raise ValueError("heads must divide feat_dim")

    @property
    def h(self) -> int:
        return self.image_size // 4

    @property
    def w(self) -> int:
        return self.image_size // 4

    @property
    def n(self) -> int:
        return self.h * self.w

    @property
    def pyramid_channels(self) -> tuple[int, int, int]:
        """Widths of (v1, v2, v3): C, C/2, C/4."""
        return self.channels, self.channels // 2, self.channels // 4


MICRO = Geometry(image_size=8, channels=8, feat_dim=8, heads=2, sem_classes=8)
