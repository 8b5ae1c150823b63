"""Exception hierarchy. Every class carries the process exit code the CLI uses."""


class EnvInsertError(Exception):
    exit_code = 1


class InvalidInputError(EnvInsertError, ValueError):
    exit_code = 2


class SceneFileNotFoundError(EnvInsertError):
    exit_code = 3


class SceneParseError(EnvInsertError):
    exit_code = 4


class SceneValidationError(EnvInsertError):
    exit_code = 5


class MissingMeshError(EnvInsertError):
    exit_code = 6


class SingularTransformError(EnvInsertError):
    exit_code = 7


class MissingAssetError(EnvInsertError):
    """A non-mesh file referenced by a scene or command (environment, bracket, image) is absent."""

    exit_code = 9


class StageError(EnvInsertError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the reason."""

    exit_code = 8

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
