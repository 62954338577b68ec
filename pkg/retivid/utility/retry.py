import logging
import time
from functools import wraps

logger = logging.getLogger(__name__)


def retry_call(
    func, exception_to_check, tries=4, delay=3, backoff=2, args=(),
    kwargs=None
):
    """
    Call func, retrying with exponential backoff. Useful when the number of
    tries is only known at run time (e.g. from the FLOW config section).

    Args:
        func (callable): function to call
        exception_to_check: the exception to check. may be a tuple of
            exceptions to check
        tries (int): number of times to try (not retry) before giving up
        delay (float): initial delay between retries in seconds
        backoff (float): backoff multiplier e.g. value of 2 will double the
            delay each retry
        args (tuple): positional arguments of func
        kwargs (dict): keyword arguments of func

    Returns:
        whatever func returns

    """
    kwargs = kwargs or {}
    mtries, mdelay = max(int(tries), 1), delay
    while mtries > 1:
        try:
            return func(*args, **kwargs)
        except exception_to_check as e:
            logger.warning(
                "%s failed (%s), %d tries left, retrying in %s seconds...",
                getattr(func, '__name__', func), e, mtries - 1, mdelay
            )
            time.sleep(mdelay)
            mtries -= 1
            mdelay *= backoff
    return func(*args, **kwargs)


def retry(exception_to_check, tries=4, delay=3, backoff=2):
    """
    Retry calling the decorated function using exponential backoff.

    Args:
        exception_to_check: the exception to check. may be a tuple of exceptions to check
        tries: number of times to try (not retry) before giving up
        delay: initial delay between retries in seconds
        backoff: backoff multiplier e.g. value of 2 will double the delay each retry
    """
    def deco_retry(f):

        @wraps(f)
        def f_retry(*args, **kwargs):
            return retry_call(
                f, exception_to_check, tries, delay, backoff, args, kwargs
            )

        return f_retry

    return deco_retry
