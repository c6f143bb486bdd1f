"""Error types shared across the framework.

Every raised error carries a machine-readable ``code`` (stable, uppercase)
so callers and tests can dispatch without string-matching messages.
"""

from __future__ import annotations

from typing import Any


class MarcoError(Exception):
    """Base error with a stable code and optional structured details."""

    def __init__(self, code: str, message: str, **details: Any) -> None:
        self.code = code
        self.details = details
        super().__init__(f"{code}: {message}")


class GraphError(MarcoError):
    """Task-graph precondition or mutation failure."""


class GatewayError(MarcoError):
    """Model backend failure (mock, replay, or HTTP)."""


class ToolError(MarcoError):
    """Tool registry failure (unknown or duplicate tool)."""


class KnowledgeError(MarcoError):
    """Blackboard or knowledge-base contract violation."""


class ReportError(MarcoError):
    """Timing-report parse or analysis precondition failure."""


class ConfigError(MarcoError):
    """Run-configuration load/validation failure.

    ``problems`` holds every violation found, not just the first.
    """

    def __init__(self, problems: list[str]) -> None:
        self.problems = list(problems)
        summary = "; ".join(problems[:3]) + ("; ..." if len(problems) > 3 else "")
        super().__init__("CONFIG_ERROR", f"{len(problems)} problem(s): {summary}")


class EngineError(MarcoError):
    """Run-loop failure; carries the partial trace when one exists."""

    def __init__(self, code: str, message: str, trace: Any = None, **details: Any) -> None:
        self.trace = trace
        super().__init__(code, message, **details)
