"""Domain error hierarchy shared by the library, CLI, and HTTP service."""

from __future__ import annotations


class DomainError(Exception):
    """Base for recoverable domain failures. CLI exit code 1, HTTP 400."""

    code = "invalid"


class ParseError(DomainError):
    """Malformed input document (requirements, defect log, SUT model, ...)."""


class ConfigError(DomainError):
    """Invalid configuration (weights, thresholds, policy packs)."""


class NotFoundError(DomainError):
    code = "not_found"


class ConflictError(DomainError):
    code = "conflict"


class ExpiredError(DomainError):
    code = "expired"
