"""Order-preserving fan-out of independent experiment cells."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable


def run_cells(fn: Callable, cells: Iterable, jobs: int = 1) -> list:
    """``[fn(*c) for c in cells]``, optionally across ``jobs`` processes.

    Results come back in cell order whatever the completion order, and each
    cell draws from its own seeded substream, so the output does not depend
    on ``jobs``.
    """
    cells = [c if isinstance(c, tuple) else (c,) for c in cells]
    if jobs <= 1 or len(cells) <= 1:
        return [fn(*c) for c in cells]
    with ProcessPoolExecutor(max_workers=min(jobs, len(cells))) as ex:
        futures = [ex.submit(fn, *c) for c in cells]
        return [f.result() for f in futures]
