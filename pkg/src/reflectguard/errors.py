"""Exception types shared across the toolkit."""


class ValidationError(ValueError):
    """Input data violates a contract (bad schema, bad reference, bad value).

    Raised for anything the caller handed us that cannot be processed:
    malformed JSON, records referencing unknown ids, out-of-range scores,
    degenerate boxes. Distinct from OSError so the CLI can map validation
    failures and I/O failures to different exit codes.
    """
