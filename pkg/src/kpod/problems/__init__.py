"""Full-order parametric benchmark problems and snapshot campaigns."""

from . import adv1d, adv2d

__all__ = ["adv1d", "adv2d"]
