"""Python bindings for the solrepair benchmark harness."""

from ._core import (  # noqa: F401
    ConfigError,
    Error,
    InvalidArgument,
    MalformedRecord,
    MalformedSource,
    UndefinedCorrelation,
    __version__,
    bleu,
    build,
    cost,
    crystal_bleu,
    extract_functions,
    inject_verification_statement,
    pass_at_k,
    pass_at_k_estimate,
    pearson,
    report,
    retrieve,
    run,
    trivially_shared_ngrams,
)
