"""Exception hierarchy shared by all afslab modules."""


class AFSLabError(Exception):
    pass


class InvalidGeometry(AFSLabError, ValueError):
    """Raised for cubes, partitions or skeletons with incompatible sizes."""


class InvalidSpec(AFSLabError, ValueError):
    pass


class MissingPotential(AFSLabError, KeyError):
    pass


class TooLarge(AFSLabError):
    pass


class NearSingular(AFSLabError):
    """Energy lies within the near-singular tolerance of the local spectrum."""

    def __init__(self, distance, tol=1e-12):
        self.distance = float(distance)
        self.tol = tol
        super().__init__(f"dist(E, spectrum) = {self.distance:.3e} below tolerance {tol:.0e}")


class ThresholdViolated(InvalidSpec):
    pass


class ConfigError(AFSLabError, ValueError):
    pass
