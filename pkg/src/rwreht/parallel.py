"""Order-preserving task pool.

Results come back in task order whatever the worker count, so reductions
done afterwards are bit-identical for any parallelism degree.
"""
from concurrent.futures import ProcessPoolExecutor


def pmap(fn, tasks, workers=1):
    tasks = list(tasks)
    if workers is None or workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
