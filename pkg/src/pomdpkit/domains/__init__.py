from .nav import build_continuous_nav, save_cell_centers
from .tag import build_tag, tagged_states
from .tiny import TINY_REGISTRY, build_tiny, random_pomdp

__all__ = [
    "TINY_REGISTRY",
    "build_continuous_nav",
    "build_tag",
    "build_tiny",
    "random_pomdp",
    "save_cell_centers",
    "tagged_states",
]
