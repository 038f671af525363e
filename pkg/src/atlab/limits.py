"""Size caps for exhaustive enumeration and the error raised beyond them."""

MAX_LAYER_SITES = 20
MAX_EDGES = 24
MAX_PAIR_STATES = 1 << 24
MAX_GAT_EDGES = 16


class CapExceeded(ValueError):
    """Requested enumeration is larger than the configured caps."""


def require(cond: bool, what: str) -> None:
    if not cond:
        raise CapExceeded(what)
