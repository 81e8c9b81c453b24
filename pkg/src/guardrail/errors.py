"""Exception hierarchy shared by every stage of the guardrail."""


class GuardrailError(Exception):
    """Base class for all errors raised by this package."""


class UnknownSlot(GuardrailError):
    pass


class BackendUnavailable(GuardrailError):
    """No backend is registered for a slot that a call requires."""

    def __init__(self, slot, detail=""):
        self.slot = slot
        msg = f"no backend registered for slot {slot!r}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class BackendFailure(GuardrailError):
    """A backend call failed or returned a malformed result."""

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message if index is None else f"record {index}: {message}")


class StageFailure(GuardrailError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the reason."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


class InvalidQuery(GuardrailError, ValueError):
    pass


# grounding
class EmptyCorpus(GuardrailError, ValueError):
    pass


class MissingKeyText(GuardrailError, ValueError):
    pass


class EmptyIndex(GuardrailError, ValueError):
    pass


class UnknownRecordId(GuardrailError, KeyError):
    pass


class EmptyQuerySet(GuardrailError, ValueError):
    pass


# customizer
class DuplicateWrapperName(GuardrailError, ValueError):
    pass


class WrapperFailure(GuardrailError):
    def __init__(self, wrapper_name, cause):
        self.wrapper_name = wrapper_name
        self.cause = cause
        super().__init__(f"wrapper {wrapper_name!r} failed: {cause}")


class ClientFailure(GuardrailError):
    """A URL blocklist or reachability client could not answer."""


# service
class ConfigError(GuardrailError):
    """Invalid service configuration; ``errors`` lists ``(field_path, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "; ".join(f"{path}: {msg}" for path, msg in self.errors)
        super().__init__(f"invalid configuration: {lines}")


class BindError(GuardrailError):
    pass
