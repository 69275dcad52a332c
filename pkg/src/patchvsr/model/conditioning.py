from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Protocol

import numpy as np

from ..errors import InvalidConfigError
from ..tiling import PatchSpec


@dataclass(frozen=True)
class MicroCondition:
    noise_t_disc: int = 250
    scale_factor: float = 1.0
    crop_origin: tuple[int, int] = (0, 0)

    def validate(self) -> None:
        if not 0 <= self.noise_t_disc <= 1000:
            raise InvalidConfigError(f"noise timestep {self.noise_t_disc} outside [0, 1000]")
        if not 1.0 <= self.scale_factor <= 4.0:
            raise InvalidConfigError(f"scale factor {self.scale_factor} outside [1, 4]")
        if min(self.crop_origin) < 0:
            raise InvalidConfigError(f"crop origin {self.crop_origin} must be non-negative")


@dataclass(frozen=True)
class ConditioningBundle:
    """Inputs a velocity model sees for one patch besides ``(z_t, t)``.

    ``patch`` is carried so that oracle models can find the patch footprint.
    """

    patch_latent_noised: np.ndarray
    global_latent_noised: np.ndarray
    location_mask: np.ndarray
    micro: MicroCondition = MicroCondition()
    conditional: bool = True
    patch: Optional[PatchSpec] = None

    def unconditional(self) -> "ConditioningBundle":
        return replace(self, conditional=False)


class VelocityModel(Protocol):
    def predict(self, z_t: np.ndarray, t: float, cond: ConditioningBundle) -> np.ndarray:
        ...
