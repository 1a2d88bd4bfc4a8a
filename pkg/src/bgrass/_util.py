"""Small shared utilities: worker pools and content hashing."""

import hashlib
from concurrent.futures import ProcessPoolExecutor


def parallel_map(fn, items, threads=1):
    """Map ``fn`` over ``items`` preserving order.

    Runs in-process when ``threads`` <= 1 (the default keeps tests and
    small runs simple and picklable-free); otherwise fans out to a process
    pool.  Results are returned in input order either way, so downstream
    merges are deterministic.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
