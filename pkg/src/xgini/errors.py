"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class XginiError(Exception):
    exit_code = 5


class ConfigError(XginiError):
    exit_code = 2


class InputError(XginiError):
    exit_code = 3


class MalformedInputError(InputError):
    """Raised when rows of an input file fail validation.

    ``lines`` holds the 1-based line numbers of the offending rows.
    """

    def __init__(self, path, problems: list[tuple[int, str]]):
        self.path = str(path)
        self.problems = problems
        self.lines = [line for line, _ in problems]
        shown = "; ".join(f"line {line}: {msg}" for line, msg in problems[:20])
        more = f" (+{len(problems) - 20} more)" if len(problems) > 20 else ""
        super().__init__(f"{self.path}: {shown}{more}")


class EmptySampleError(InputError):
    pass


class DuplicateKeyError(InputError):
    pass


class YearAbsentError(InputError):
    pass


class PrerequisiteError(InputError):
    def __init__(self, stage: str, missing: str):
        self.stage = stage
        super().__init__(f"missing {missing}; run the '{stage}' stage first")


class NumericalError(XginiError):
    exit_code = 4


class DegenerateSpectrumError(NumericalError):
    pass


class DisconnectedError(DegenerateSpectrumError):
    """The bipartite country-product graph splits into several components.

    A disconnected matrix always has a repeated unit eigenvalue, so this is a
    special case of a degenerate spectrum.
    """

    def __init__(self, components: list[list[str]]):
        self.components = components
        desc = " | ".join(",".join(c) for c in components)
        super().__init__(
            f"degenerate spectrum: country-product graph has {len(components)} "
            f"components, scores are not comparable across them: {desc}"
        )


class NonConvergenceError(NumericalError):
    def __init__(self, iterations: int, last_delta: float):
        self.iterations = iterations
        self.last_delta = last_delta
        super().__init__(
            f"no convergence after {iterations} iterations (last delta {last_delta:.3e})"
        )
