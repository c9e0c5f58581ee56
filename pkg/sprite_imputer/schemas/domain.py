from enum import Enum
from typing import Tuple, Union


class DomainId(int, Enum):
    """The four canonical poses. The order fixes label channels, file layout and report rows."""
    BACK = 0
    LEFT = 1
    FRONT = 2
    RIGHT = 3

    @property
    def pose_name(self) -> str:
        return self.name.lower()

    def __str__(self) -> str:
        return self.pose_name


ALL_DOMAINS: Tuple[DomainId, ...] = tuple(DomainId)
NUM_DOMAINS = len(ALL_DOMAINS)


def normalize_domain(value: Union[str, int, DomainId]) -> DomainId:
    """
    Accept a DomainId, its index or its pose name in any case ("Right", "RIGHT").

    Raises:
        ValueError: for anything that is not one of the four poses
    """
    if isinstance(value, DomainId):
        return value
    if isinstance(value, bool):
        raise ValueError(f"Invalid pose: {value!r}")
    if isinstance(value, int):
        try:
            return DomainId(value)
        except ValueError:
            raise ValueError(f"Invalid pose index: {value}. Expected 0-3")
    if isinstance(value, str):
        key = value.strip().upper()
        if key.isdigit():
            return normalize_domain(int(key))
        if key in DomainId.__members__:
            return DomainId[key]
    raise ValueError(f"Invalid pose: {value!r}. Expected one of {[d.pose_name for d in ALL_DOMAINS]}")


def other_domains(target: DomainId) -> Tuple[DomainId, ...]:
    """N minus {target}, in canonical order."""
    return tuple(d for d in ALL_DOMAINS if d != target)
