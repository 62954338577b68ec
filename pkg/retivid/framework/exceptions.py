class UsageError(Exception):
    """
    Command line misuse, reported with exit code 2
    """
    pass
