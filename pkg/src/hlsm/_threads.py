import os


def worker_count():
    """Thread cap from ``HLSM_THREADS``; ``None`` (library default) when unset or 0."""
    n = int(os.environ.get("HLSM_THREADS", "0") or 0)
    return n if n > 0 else None
