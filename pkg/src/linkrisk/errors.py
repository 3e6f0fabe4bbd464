class TransportError(RuntimeError):
    """A backend call failed in transit (after retries); safe to retry later."""


class ProtocolError(RuntimeError):
    """A backend answered with something outside its contract."""


class ConfigError(ValueError):
    pass
