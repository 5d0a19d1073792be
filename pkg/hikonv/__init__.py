from hikonv import devices as devices
from hikonv import exceptions as exceptions
from hikonv import op as op
from hikonv import layers as layers
from hikonv import models as models
from hikonv import qtensor as qtensor
from .version import __version__

__all__ = [
    "devices",
    "exceptions",
    "op",
    "layers",
    "models",
    "qtensor",
    "__version__",
]
