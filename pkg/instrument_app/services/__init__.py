from .clips import ClipService
from .runs import RunService

__all__ = ['ClipService', 'RunService']
