"""Exception types shared across the package."""


class VoxganError(Exception):
    pass


class ShapeError(VoxganError):
    """Raised when an operation receives incompatible shapes."""

    def __init__(self, op, shape_a, shape_b, detail=""):
        self.op = op
        self.shape_a = tuple(shape_a) if not isinstance(shape_a, str) else shape_a
        self.shape_b = tuple(shape_b) if not isinstance(shape_b, str) else shape_b
        msg = f"{op}: incompatible shapes {self.shape_a} and {self.shape_b}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class GradientError(VoxganError):
    pass


class NonFiniteError(VoxganError):
    """A loss or gradient went NaN/Inf; carries the offending name and step."""

    def __init__(self, name, step, detail=""):
        self.name = name
        self.step = step
        msg = f"non-finite value in '{name}' at step {step}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ConfigError(VoxganError):
    pass


class DataError(VoxganError):
    pass


class ContainerError(VoxganError):
    """Malformed binary container: bad magic, version, truncation or checksum."""

    pass
