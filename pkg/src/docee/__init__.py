"""Document-level event extraction with a heterogeneous interaction graph and a record tracker."""

__version__ = "0.1.0"
