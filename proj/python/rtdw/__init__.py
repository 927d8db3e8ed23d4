"""Embedded real-time data warehouse engine (pybind11 bindings)."""

try:
    from ._rtdw import (  # noqa: F401
        Engine,
        EngineError,
        generate_workload,
        run_scenario,
        validate_schema,
    )
except ImportError:  # build-tree layout places _rtdw next to the package
    from _rtdw import (  # noqa: F401
        Engine,
        EngineError,
        generate_workload,
        run_scenario,
        validate_schema,
    )

__all__ = [
    "Engine",
    "EngineError",
    "generate_workload",
    "run_scenario",
    "validate_schema",
]
