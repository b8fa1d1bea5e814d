class LabError(Exception):
    pass


class ParamsError(LabError, ValueError):
    pass


class GridError(LabError, ValueError):
    pass


class NodeIndexError(LabError, IndexError):
    pass


class RegionError(LabError, ValueError):
    pass


class StencilError(LabError, ValueError):
    pass


class CutoffSupportError(LabError, ValueError):
    pass


class CoordinateSingularityError(LabError, ValueError):
    pass


class CriticalPointError(LabError, ArithmeticError):
    def __init__(self, message: str, node: tuple[int, ...] | None = None):
        super().__init__(message if node is None else f"{message} at node {node}")
        self.message = message
        self.node = node

    def __reduce__(self):
        return type(self), (self.message, self.node)


class CflError(LabError, ValueError):
    pass


class BlowUpError(LabError, ArithmeticError):
    def __init__(self, step: int):
        super().__init__(f"Non-finite values after step {step}")
        self.step = step

    def __reduce__(self):
        return type(self), (self.step,)


class IncompatibleDataError(LabError, ValueError):
    pass


class EstimateScopeError(LabError, ValueError):
    pass


class ReportWriteError(LabError, OSError):
    pass
