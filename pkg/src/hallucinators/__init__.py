from src.enums import HallucinatorType
from src.instance import Hallucinator

from .mirror import MirrorHallucinator, mirror_hallucinate, reflect_lateral
from .resample_only import ResampleOnlyHallucinator


def get_hallucinator(kind: HallucinatorType) -> Hallucinator:
    if kind == HallucinatorType.mirror:
        return MirrorHallucinator()
    if kind == HallucinatorType.none:
        return ResampleOnlyHallucinator()
    raise ValueError(f"Unknown hallucinator type: {kind}")


__all__ = [
    "MirrorHallucinator",
    "ResampleOnlyHallucinator",
    "get_hallucinator",
    "mirror_hallucinate",
    "reflect_lateral",
]
