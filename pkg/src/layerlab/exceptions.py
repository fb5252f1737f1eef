"""Error types raised by layerlab.

Every error carries a short machine-readable ``code`` used by the CLI to pick
an exit status.
"""


class LayerlabError(Exception):
    code = "error"
    exit_status = 1


class GeometryError(LayerlabError):
    code = "geometry"
    exit_status = 4


class GridTooCoarse(GeometryError):
    code = "grid_too_coarse"


class DegenerateTangent(GeometryError):
    code = "degenerate_tangent"


class MetricNotPositive(GeometryError):
    code = "metric_not_positive"


class SingularReference(GeometryError):
    code = "singular_reference"


class CrossSectionError(LayerlabError):
    code = "cross_section"
    exit_status = 4


class EmptyInterior(CrossSectionError):
    code = "empty_interior"


class DegenerateGroundState(CrossSectionError):
    code = "degenerate_ground_state"


class SolverNoConvergence(LayerlabError):
    """Iterative solver hit its iteration cap.

    ``result`` holds the best iterate found so far (may be None).
    """

    code = "solver_no_convergence"
    exit_status = 3

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class OutOfMemory(LayerlabError):
    code = "out_of_memory"
    exit_status = 3


class DomainTooShort(LayerlabError):
    code = "domain_too_short"
    exit_status = 4

    def __init__(self, message, max_members=0):
        super().__init__(message)
        self.max_members = max_members


class LambdaInSpectrum(LayerlabError):
    code = "lambda_in_spectrum"
    exit_status = 4


class SchemaError(LayerlabError):
    """Scenario file failed validation; ``pointer`` is a JSON pointer."""

    code = "schema"
    exit_status = 2

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
