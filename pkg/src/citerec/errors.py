"""Exception types shared across the package."""


class CiterecError(Exception):
    """Base class for all citerec errors."""


class ParseError(CiterecError):
    """A record file could not be parsed; carries the offending line number."""

    def __init__(self, path, line_no, reason):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{self.path}:{line_no}: {reason}")


class DuplicateIdError(CiterecError):
    """Two records in one file share the same identifier."""

    def __init__(self, paper_id, first_line, second_line):
        self.paper_id = paper_id
        super().__init__(
            f"duplicate paper id {paper_id!r} (lines {first_line} and {second_line})"
        )


class ValidationError(CiterecError):
    """A record violates a structural invariant."""


class VersionMismatchError(CiterecError):
    """An on-disk index declares a schema version this build does not know."""


class ChecksumError(CiterecError):
    """An on-disk index file does not match its manifest checksum."""


class SchemaMismatchError(CiterecError):
    """A model was built against a different feature schema version."""


class BackendError(CiterecError):
    """A remote judge or generation backend failed."""
