"""Exception hierarchy shared by every layer of the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class CatalogError(EngineError):
    pass


class DuplicateTableError(CatalogError):
    pass


class UnknownTableError(CatalogError):
    pass


class UnknownColumnError(CatalogError):
    pass


class AmbiguousColumnError(CatalogError):
    pass


class SchemaError(CatalogError):
    """Invalid schema definition (duplicate columns, bad types, ...)."""


class HeaderMismatchError(CatalogError):
    pass


class ValueTypeError(CatalogError):
    def __init__(self, message: str, row_index: int | None = None):
        super().__init__(message)
        self.row_index = row_index


class SqlError(EngineError):
    """Raised by the SQL front end."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class SqlSyntaxError(SqlError):
    pass


class UnsupportedConstructError(SqlError):
    pass


class IndexEngineError(EngineError):
    """Base for index build and probe failures."""


class DuplicateIndexError(IndexEngineError):
    pass


class UnknownIndexError(IndexEngineError):
    pass


class HypotheticalProbeError(IndexEngineError):
    pass


class NonPrefixPredicateError(IndexEngineError):
    pass


class PlanError(EngineError):
    pass


class QueryError(EngineError):
    """A failure while processing a query; carries the offending SQL text."""

    def __init__(self, query: str, cause: Exception):
        super().__init__(f"{cause} [query: {query}]")
        self.query = query
        self.cause = cause
