"""Named parameter sets used by the experiments."""
import math

from .geometry import ModelParams

PRESETS = {
    "tail": lambda: ModelParams.windtree(a=math.sqrt(2) / 4, r=0.05, theta_tan="1/1"),
    "canonical": lambda: ModelParams.windtree(a=0.4, r=0.1, theta_tan="1/1"),
    "finite": lambda: ModelParams.windtree(a=0.4, r=0.25, theta_tan="1/1"),
    "lorentz": lambda: ModelParams.lorentz(disk_radius=0.3, r=0.1),
}


def preset(name: str) -> ModelParams:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
