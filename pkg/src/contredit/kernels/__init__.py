"""Edit-distance kernels: compiled extension when built, pure Python otherwise."""

try:
    from contredit.kernels._clev import align_ops_ids, distance_ids

    BACKEND = "cython"
except ImportError:  # extension not built; same semantics, slower
    from contredit.kernels._pylev import align_ops_ids, distance_ids

    BACKEND = "python"

__all__ = ["align_ops_ids", "distance_ids", "BACKEND"]
