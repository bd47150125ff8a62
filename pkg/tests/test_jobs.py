from src.jobs import run_jobs


def _square_plus(x, offset):
    return x * x + offset


def test_serial_and_parallel_keep_job_order():
    jobs = [(i, 1) for i in range(20)]
    serial = run_jobs(_square_plus, jobs, workers=1, progress=False)
    parallel = run_jobs(_square_plus, jobs, workers=2, progress=False)
    assert serial == [i * i + 1 for i in range(20)]
    assert parallel == serial


def test_empty_job_list():
    assert run_jobs(_square_plus, [], workers=2, progress=False) == []
