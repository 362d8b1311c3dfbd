"""Exception hierarchy shared by every stage of the pipeline."""


class DarwinError(Exception):
    """Base class for all errors raised by this package."""


# store
class StoreError(DarwinError):
    pass


class ParseError(StoreError):
    pass


class ValidationError(StoreError):
    pass


class UnknownStoreId(StoreError):
    pass


# extract
class ExtractError(DarwinError):
    pass


class OverlapError(ExtractError):
    pass


class GeneOutOfRange(ExtractError):
    pass


class HotnessFileMissing(ExtractError):
    pass


class HotnessFileMalformed(ExtractError):
    pass


class ManifestError(ExtractError):
    pass


# stats
class StatsError(DarwinError, ValueError):
    pass


class EmptySamples(StatsError):
    pass


class TooFewSamples(StatsError):
    pass


class ZeroBaseline(StatsError):
    pass


# evaluate
class EvalError(DarwinError):
    pass


class SandboxSetupError(EvalError):
    pass


class ProcessVanished(EvalError):
    pass


class BaselineInfeasible(EvalError):
    def __init__(self, outcome):
        self.outcome = outcome
        super().__init__(f"baseline is infeasible: {outcome.stage.value}: {outcome.detail}")


# search
class SearchError(DarwinError):
    pass


class SchemaMismatch(SearchError):
    pass


class AllInfeasible(SearchError):
    def __init__(self, stage, count: int):
        self.stage = stage
        self.count = count
        super().__init__(f"no feasible variant found; most common failure: {stage} ({count}x)")


# cli / run directories
class ConfigError(DarwinError):
    pass


class NoRunFound(DarwinError):
    pass


class RunCorrupt(DarwinError):
    def __init__(self, path, lineno: int, reason: str):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {reason}")


class UnknownSolution(DarwinError):
    pass


class TargetNotEmpty(DarwinError):
    pass


class NothingToOptimize(DarwinError):
    pass
