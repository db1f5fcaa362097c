from typing import Any, Dict, Optional


class GaugeForgeError(Exception):
    """Base error; `exit_code` is what the command line returns for it."""

    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class DomainError(GaugeForgeError, ValueError):
    """A grid or algebra precondition does not hold."""

    exit_code = 4


class ConfigurationError(GaugeForgeError):
    """Unreadable, invalid or missing configuration, field or report file."""

    exit_code = 4


class MonitorBreachError(GaugeForgeError):
    """A smallness monitor (eps0, eps1, ...) was violated."""

    exit_code = 2

    def __init__(self, monitor: str, value: float, threshold: float, step: Optional[int] = None, detail: str = ""):
        where = f" at continuation step {step}" if step is not None else ""
        message = f"monitor '{monitor}' breached{where}: value {value:.6e} vs threshold {threshold:.6e}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
        self.monitor = monitor
        self.value = value
        self.threshold = threshold
        self.step = step


class SolverFailureError(GaugeForgeError):
    """A Krylov solve did not meet its residual contract."""

    exit_code = 3

    def __init__(self, message: str, report: Any = None, monitors: Optional[Dict[str, float]] = None):
        super().__init__(message)
        self.report = report
        self.monitors = dict(monitors or {})
