"""Exception hierarchy shared by every stage of the pipeline."""


class SamlpError(Exception):
    """Base class for all pipeline errors."""


class InputError(SamlpError):
    """Bad user input: unreadable files, malformed records, bad labels."""


class ParseError(InputError):
    pass


class SchemaError(InputError):
    pass


class LabelError(SchemaError):
    pass


class EmptyDatasetError(InputError):
    pass


class DuplicateLabelError(InputError):
    pass


class ConfigError(InputError):
    pass


class SchemaMismatchError(SchemaError):
    """Feature schema of the data does not match the one a model was trained on."""


class InvalidAgeError(SamlpError):
    pass


class StratificationError(SamlpError):
    pass


class ClassAbsentError(SamlpError):
    pass


class SelectionError(SamlpError):
    pass


class TrainingError(SamlpError):
    pass


class TuningError(SamlpError):
    pass


class ModeError(SamlpError):
    pass


class StageError(SamlpError):
    """Wraps a failure inside :func:`samlp.tuner.run_pipeline` with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
