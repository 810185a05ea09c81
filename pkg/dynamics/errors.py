"""
Failure types shared by every lab module
"""


class RovellaLabError(Exception):
    """Base class for lab failures"""


class SingularityHit(RovellaLabError):
    """An orbit landed on (or numerically at) the critical point 0"""

    def __init__(self, time: int, point: float = 0.0):
        self.time = time
        self.point = point
        super().__init__(f"orbit hit the singularity at time {time} (x={point!r})")


class SingularityExhausted(RovellaLabError):
    """Too many sampled orbits hit the singularity to redraw them all"""

    def __init__(self, redrawn: int):
        self.redrawn = redrawn
        super().__init__(f"gave up after redrawing {redrawn} samples that hit the singularity")


class DegenerateFit(RovellaLabError):
    """Too few positive points for an exponential fit"""


class NoConvergence(RovellaLabError):
    def __init__(self, max_iter: int, residual: float):
        self.max_iter = max_iter
        self.residual = residual
        super().__init__(f"no convergence after {max_iter} iterations, residual {residual:.3e}")


class BinMismatch(RovellaLabError):
    """Two densities live on different bin grids"""


class InconsistentRecord(RovellaLabError):
    """Partition records broke a construction invariant"""


class ConfigError(RovellaLabError):
    """Experiment configuration failed to parse or validate"""


class ExceedsHorizon:
    """
    Marker returned by the time functions when the defining inequality
    still fails at the horizon
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ExceedsHorizon"

    def __bool__(self) -> bool:
        return False


EXCEEDS_HORIZON = ExceedsHorizon()
