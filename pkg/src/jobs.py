import logging

from joblib import Parallel, delayed
from tqdm import tqdm

logger = logging.getLogger(__name__)


def run_jobs(func, jobs, workers=1, desc=None, progress=True):
    """
    Apply func(*args) to every args tuple in `jobs`; results come back in job
    order whatever the worker count.
    """
    jobs = list(jobs)
    bar = tqdm(total=len(jobs), desc=desc, disable=not progress, leave=False)
    if workers <= 1:
        results = []
        for args in jobs:
            results.append(func(*args))
            bar.update(1)
    else:
        logger.debug(f"{desc or 'jobs'}: {len(jobs)} jobs on {workers} workers")
        stream = Parallel(n_jobs=workers, return_as="generator")(delayed(func)(*args) for args in jobs)
        results = []
        for result in stream:
            results.append(result)
            bar.update(1)
    bar.close()
    return results
