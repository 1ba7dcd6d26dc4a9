"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MoascanError(Exception):
    """Base class for every error raised by moascan."""


class ConfigError(MoascanError):
    pass


class IngestError(MoascanError):
    pass


class CatalogError(MoascanError):
    pass


class CatalogParseError(CatalogError):
    pass


class DuplicateIdError(CatalogError):
    pass


class UnknownVulnError(CatalogError):
    pass


class AmbiguousAliasError(CatalogError):
    def __init__(self, raw: str, matches: list[str]):
        self.raw = raw
        self.matches = sorted(matches)
        super().__init__(f"name {raw!r} matches several catalog entries: {', '.join(self.matches)}")


class KnowledgeBaseError(MoascanError):
    pass


class SnapshotError(KnowledgeBaseError):
    pass


class PromptError(MoascanError):
    pass


class MissingSlotError(PromptError):
    pass


class ContextMismatchError(PromptError):
    pass


class ProviderError(MoascanError):
    """Any failure to obtain a completion."""


class ProviderUnavailableError(ProviderError):
    pass


class MissingCredentialError(ProviderError):
    """The API key environment variable is unset; never retried."""


class RateLimitedError(ProviderError):
    pass


class BudgetExceededError(ProviderError):
    def __init__(self, estimated: int, window: int):
        self.estimated = estimated
        self.window = window
        super().__init__(f"request needs ~{estimated} tokens but the context window is {window}")


class CassetteMissError(ProviderError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"no cassette entry for request digest {digest}")


class DigestCollisionError(MoascanError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"digest {digest} already recorded with a different response; review the cassette")


class AgentFailureError(ProviderError):
    """A provider error raised while running one agent of a chain."""

    def __init__(self, index: int, model_name: str, cause: Exception):
        self.index = index
        self.model_name = model_name
        self.cause = cause
        super().__init__(f"agent {index} ({model_name}) failed: {cause}")


class EvaluationError(MoascanError):
    pass
