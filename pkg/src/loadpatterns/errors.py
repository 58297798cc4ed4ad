"""Exception types shared across the toolkit."""


class LoadPatternsError(Exception):
    """Base class for all toolkit errors."""


# --- ingest ---------------------------------------------------------------

class MalformedRowError(LoadPatternsError):
    """A CSV row has the wrong column count or an unparseable field."""


class DuplicateReadingError(LoadPatternsError):
    """Two meter readings share the same household, date and hour."""


class NegativeLoadError(LoadPatternsError):
    """A meter reading reports negative consumption."""


class DegenerateDayError(LoadPatternsError):
    """A day's 24 readings are all equal, so min-max scaling is undefined."""


class UnknownCategoryError(LoadPatternsError):
    """A survey label is not in the ordinal encoding table."""


class MissingFieldError(LoadPatternsError):
    """A survey row lacks a required field."""


# --- cluster --------------------------------------------------------------

class LengthMismatchError(LoadPatternsError):
    """Paired inputs have different lengths."""


class TooFewProfilesError(LoadPatternsError):
    """Fewer distinct profiles than requested clusters."""


class EmptyClusterError(LoadPatternsError):
    """A cluster became empty and reseeding did not recover."""


class NoDaysError(LoadPatternsError):
    """A household has no assigned days in the requested day class."""


# --- neural / baselines ---------------------------------------------------

class ArityMismatchError(LoadPatternsError):
    """An input vector does not match the network's expected width."""


class NonFiniteActivationError(LoadPatternsError):
    """A forward pass produced NaN or infinity."""


class EmptySplitError(LoadPatternsError):
    """A train/validation/test split has no samples."""


class DivergedLossError(LoadPatternsError):
    """Training loss became non-finite."""


class EmptyComplementError(LoadPatternsError):
    """A pattern selected every feature, leaving no complement inputs."""


# --- synthgen / pipeline --------------------------------------------------

class ConfigInvalidError(LoadPatternsError):
    """A configuration file or value is invalid."""


class MissingArtifactError(LoadPatternsError):
    """A report was requested before the pipeline produced its inputs."""


class StageError(LoadPatternsError):
    """A pipeline stage failed; carries the stage name and cause."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
