class DetectorTuningError(Exception):
    """Base exception for application"""
    def __init__(self, message: str, exit_code: int = 3):
        self.message = message
        self.exit_code = exit_code
        super().__init__(self.message)


class ConfigError(DetectorTuningError):
    """Malformed configuration or input document"""
    def __init__(self, message: str):
        super().__init__(message, exit_code=2)


class StructuralError(ConfigError):
    """Matrix or vector dimensions that do not fit together"""
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DomainError(DetectorTuningError):
    """Argument outside the domain of an operation"""
    def __init__(self, message: str):
        super().__init__(message, exit_code=2)


class InstabilityError(DetectorTuningError):
    def __init__(self, spectral_radius: float, eigenvalue: complex):
        self.spectral_radius = spectral_radius
        self.eigenvalue = eigenvalue
        super().__init__(
            f"F - LC is not Schur stable: eigenvalue {eigenvalue:.6g} has modulus "
            f"{spectral_radius:.6g} >= 1"
        )


class SingularMatrixError(DetectorTuningError):
    def __init__(self, name: str, condition_number: float):
        self.name = name
        self.condition_number = condition_number
        super().__init__(f"{name} is singular or ill-conditioned (condition number {condition_number:.3e})")


class GuardExceededError(DetectorTuningError):
    def __init__(self, mode_count: int, guard: int):
        self.mode_count = mode_count
        self.guard = guard
        super().__init__(
            f"Exact enumeration needs {mode_count} modes (guard {guard}); "
            f"use residual_gmm_iterative with a reduction config instead"
        )


class QuadratureError(DetectorTuningError):
    def __init__(self, message: str, best_estimate: float, error_estimate: float):
        self.best_estimate = best_estimate
        self.error_estimate = error_estimate
        super().__init__(message)


class FitError(DetectorTuningError):
    """EM fitting failed after re-seeding"""
