"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    pass


class InvalidOperation(RuntimeError):
    pass


class GenerationFailure(RuntimeError):
    """Rejection sampling exhausted its retry budget."""


class SizeLimit(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
