"""Exception types shared across the toolkit."""


class CompsplitError(Exception):
    """Base class for all toolkit errors."""


class InvalidToken(CompsplitError):
    pass


class SchemaError(CompsplitError):
    pass


class VocabError(CompsplitError):
    pass


class InvalidParameter(CompsplitError):
    pass


class IncrementalError(CompsplitError):
    pass


class EmptyCorpus(CompsplitError):
    pass


class CoverageError(CompsplitError):
    pass
