"""Continuous-time structural nested mean model estimation."""

try:
    from ._core import (  # installed package layout
        ConfigError,
        DataError,
        Dataset,
        FitError,
        IdentificationError,
        IoError,
        SchemaError,
        estimate,
        generate_dataset,
        read_csv,
        run_scenario,
        write_csv,
    )
except ImportError:  # in-tree test layout: extension next to the package
    from _core import (
        ConfigError,
        DataError,
        Dataset,
        FitError,
        IdentificationError,
        IoError,
        SchemaError,
        estimate,
        generate_dataset,
        read_csv,
        run_scenario,
        write_csv,
    )

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "FitError",
    "IdentificationError",
    "IoError",
    "SchemaError",
    "estimate",
    "generate_dataset",
    "read_csv",
    "run_scenario",
    "write_csv",
    "__version__",
]
