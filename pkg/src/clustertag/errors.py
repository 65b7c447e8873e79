"""Exception taxonomy shared across the allocator models and the CLI."""


class ClusterTagError(Exception):
    """Base class for everything raised by this package."""


# -- address space bookkeeping -------------------------------------------

class AlignmentError(ClusterTagError):
    """An address or length violated a page/granule alignment precondition."""


class OverlapError(ClusterTagError):
    """A reservation request intersects an existing reservation."""


class UnknownRangeError(ClusterTagError):
    """A release targeted a range that is not currently reserved."""


# -- layout / placement ---------------------------------------------------

class RegionFullError(ClusterTagError):
    """All 1024 pool slots of a region are already open."""


class PlacementExhaustedError(ClusterTagError):
    """Cluster placement failed after bounded retries across pools."""


# -- faults a sanitizer is expected to surface ----------------------------

class MemoryFault(ClusterTagError):
    """Base class for faults that count as a detection in the harness."""


class DoubleFreeError(MemoryFault):
    """free() of a chunk whose slot is already marked freed."""


class InvalidFreeError(MemoryFault):
    """free() of an address that maps to no live chunk."""


class TagMismatchError(MemoryFault):
    """Pointer key disagreed with the memory lock during free()."""


# -- metrics ---------------------------------------------------------------

class EmptyMultisetError(ClusterTagError):
    """Objectives requested over a distance multiset with no samples."""


class DomainError(ClusterTagError):
    """Numeric argument outside the domain of an analytic formula."""


# -- CLI / trace replay ----------------------------------------------------

class TraceParseError(ClusterTagError):
    """Malformed trace or scenario input; carries a line number."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class TraceProtocolError(ClusterTagError):
    """Well-formed trace event that violates the malloc/free protocol."""
