from sprite_imputer.models.discriminator import Discriminator
from sprite_imputer.models.generator import Generator, param_count

__all__ = ["Discriminator", "Generator", "param_count"]
