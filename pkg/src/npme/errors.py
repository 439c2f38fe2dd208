"""Error taxonomy. Each class carries the process exit code used by the CLI."""


class NPMEError(Exception):
    exit_code = 1


class ConfigError(NPMEError, ValueError):
    exit_code = 2


class GeometryError(NPMEError, ValueError):
    exit_code = 3


class DisjointWindows(GeometryError):
    exit_code = 3


class QuadratureFailure(NPMEError, ArithmeticError):
    exit_code = 4


class NewtonDivergence(NPMEError, RuntimeError):
    exit_code = 5


class ContinuationStall(NPMEError, RuntimeError):
    exit_code = 5


class BetaInadmissible(NPMEError, ValueError):
    exit_code = 2


class RankDeficiency(NPMEError, ValueError):
    exit_code = 6


class CheckFailure(NPMEError):
    exit_code = 7


EXIT_CODES = {
    0: "success",
    1: "unexpected internal error",
    2: "invalid configuration (including inadmissible beta)",
    3: "invalid geometry (windows disjoint, touching the domain, or outside the grid)",
    4: "quadrature produced a non-finite matrix entry",
    5: "nonlinear solver failure (Newton divergence or stalled continuation)",
    6: "rank-deficient or ill-conditioned fit",
    7: "an invariant check failed",
}
