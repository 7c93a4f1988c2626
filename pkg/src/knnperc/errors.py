"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A parameter is outside the domain an operation accepts."""


class PreconditionError(ValueError):
    """Inputs are individually valid but violate an operation's precondition."""


class GeometryError(RuntimeError):
    """Region geometry is inconsistent (e.g. regions that should be disjoint overlap)."""


class NotFoundError(LookupError):
    """A search finished without finding a qualifying value.

    ``best`` carries the best ``(k, a, p)`` triple seen during the search.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class CouplingFailure(RuntimeError):
    """A hop edge required by the tile-to-tile path construction is missing.

    This is a falsification witness for the coupling, so it is reported and
    never repaired.
    """

    def __init__(self, t1, t2, missing_edge):
        super().__init__(
            f"missing edge {missing_edge} on mimic path between tiles {t1} and {t2}"
        )
        self.t1 = tuple(t1)
        self.t2 = tuple(t2)
        self.missing_edge = tuple(int(v) for v in missing_edge)
