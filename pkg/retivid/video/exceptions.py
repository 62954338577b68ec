class RetividException(Exception):
    pass


class CommandFailed(RetividException):
    pass


class MissingPath(RetividException):

    def __init__(self, path, reason="does not exist"):
        self.path = path
        self.reason = reason

    def __str__(self):
        return f"Path {self.path} {self.reason}"


class UnreadableFrame(RetividException):

    def __init__(self, name):
        self.name = name

    def __str__(self):
        return f"Frame {self.name} could not be decoded"


class InconsistentDimensions(RetividException):

    def __init__(self, frame_a, frame_b):
        self.frame_a = frame_a
        self.frame_b = frame_b

    def __str__(self):
        return (
            f"Frames {self.frame_a} and {self.frame_b} have different "
            f"dimensions"
        )


class InvalidFrame(RetividException):
    pass


class UnwritablePath(RetividException):
    pass


class ConfigMismatch(RetividException):

    def __init__(self, expected, found):
        self.expected = expected
        self.found = found

    def __str__(self):
        return (
            f"Checkpoint was written for config {self.found[:12]}, active "
            f"config is {self.expected[:12]}"
        )


class CorruptCheckpoint(RetividException):
    pass


class DegenerateInput(RetividException):
    pass


class BackendFailure(RetividException):

    def __init__(self, detail):
        self.detail = detail

    def __str__(self):
        return f"Flow backend failed: {self.detail}"


class UnknownFlowBackend(RetividException):

    def __init__(self, name, valid):
        self.name = name
        self.valid = sorted(valid)

    def __str__(self):
        return f"Unknown flow backend {self.name!r}. Valid: {self.valid}"


class SequenceError(RetividException):
    pass


class NonFiniteLoss(RetividException):

    def __init__(self, step, report):
        self.step = step
        self.report = report

    def __str__(self):
        return f"Non finite loss at step {self.step}: {self.report}"


class UnknownConfigKey(RetividException):

    def __init__(self, keys, valid):
        self.keys = sorted(keys)
        self.valid = sorted(valid)

    def __str__(self):
        return (
            f"Unknown config keys {self.keys}. Valid keys: {self.valid}"
        )


class MetricInputError(RetividException):
    pass
