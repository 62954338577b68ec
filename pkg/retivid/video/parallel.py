import logging
import sys

import gevent.pool
import gevent.queue
import gevent.threadpool

log = logging.getLogger(__name__)


class ExceptionHolder(object):
    def __init__(self, exc_info):
        self.exc_info = exc_info


def capture_traceback(func, *args, **kwargs):
    """
    Utility function to capture tracebacks of any exception func
    raises.
    """
    try:
        return func(*args, **kwargs)
    except Exception:
        return ExceptionHolder(sys.exc_info())


def resurrect_traceback(exc):
    if isinstance(exc, ExceptionHolder):
        exc_info = exc.exc_info
    elif isinstance(exc, BaseException):
        exc_info = (type(exc), exc, None)
    else:
        return

    raise exc_info[1].with_traceback(exc_info[2])


class parallel(object):
    """
    This class is a context manager for running functions in parallel.

    The spawned functions are numpy/torch heavy, so each one runs in a
    thread of a gevent thread pool of `size` workers while the greenlet
    which spawned it waits for the result. With size=1 the work is
    serialized but the interface stays the same.

    You add functions to be run with the spawn method::

        with parallel(size=4) as p:
            for index, frame in enumerate(frames):
                p.spawn(score_frame, index, frame)

    You can iterate over the results (which are in arbitrary order)::

        with parallel(size=4) as p:
            for index, frame in enumerate(frames):
                p.spawn(score_frame, index, frame)
            rows = sorted(p)

    If one of the spawned functions throws an exception, it will be thrown
    when iterating over the results, or when the with block ends.

    At the end of the with block, the main thread waits until all
    spawned functions have completed, or, if one exited with an exception,
    kills the rest and raises the exception.
    """

    def __init__(self, size=1):
        self.size = max(int(size), 1)
        self.group = gevent.pool.Pool(self.size)
        self.threads = gevent.threadpool.ThreadPool(self.size)
        self.results = gevent.queue.Queue()
        self.count = 0
        self.any_spawned = False
        self.iteration_stopped = False

    def spawn(self, func, *args, **kwargs):
        self.count += 1
        self.any_spawned = True
        greenlet = self.group.spawn(
            self._in_thread, capture_traceback, func, *args, **kwargs
        )
        greenlet.link(self._finish)

    def _in_thread(self, func, *args, **kwargs):
        return self.threads.apply(func, args, kwargs)

    def __enter__(self):
        return self

    def __exit__(self, type_, value, traceback):
        self.group.join()
        self.threads.kill()

        if value is not None:
            return False

        try:
            # raises if any greenlets exited with an exception
            for result in self:
                log.debug('result is %s', repr(result))
                pass
        except Exception:
            # Emit message here because traceback gets stomped when we re-raise
            log.exception("Exception in parallel execution")
            raise
        return True

    def __iter__(self):
        return self

    def __next__(self):
        if not self.any_spawned or self.iteration_stopped:
            raise StopIteration()
        result = self.results.get()

        try:
            resurrect_traceback(result)
        except StopIteration:
            self.iteration_stopped = True
            raise

        return result

    def _finish(self, greenlet):
        if greenlet.successful():
            self.results.put(greenlet.value)
        else:
            self.results.put(greenlet.exception)

        self.count -= 1
        if self.count <= 0:
            self.results.put(StopIteration())


def map_ordered(func, items, size=1):
    """
    Apply func to every item through parallel and return the results in
    the order of items.

    Args:
        func (callable): function of one item
        items (iterable): inputs
        size (int): number of worker threads

    Returns:
        list: func(item) for every item, in input order

    """
    items = list(items)
    if not items:
        return []

    def indexed(index, item):
        return index, func(item)

    with parallel(size=size) as p:
        for index, item in enumerate(items):
            p.spawn(indexed, index, item)
        results = dict(p)
    return [results[index] for index in range(len(items))]
