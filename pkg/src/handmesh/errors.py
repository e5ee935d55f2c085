"""Exception types shared across the package."""


class HandMeshError(Exception):
    """Base class for all package errors."""


class ShapeError(HandMeshError, ValueError):
    """Operands have incompatible dimensions."""


class ContractError(HandMeshError, ValueError):
    """An operation was called outside its contract (wrong stage, bad counts)."""


class ConfigError(HandMeshError, ValueError):
    """Invalid run or model configuration."""


class AssetError(HandMeshError, ValueError):
    """A required external asset (regressor, faces) is missing or malformed."""


class DataError(HandMeshError, ValueError):
    """Manifest, blob or annotation data failed validation."""


class TrainingDiverged(HandMeshError, RuntimeError):
    """Training aborted after a non-finite loss."""
