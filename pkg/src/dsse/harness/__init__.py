from .bench import BenchReport, long_state_run, run_bench
from .oracle import PlaintextOracle
from .phi import ATTRIBUTES, PHIFile, synthesize_stream
from .scenario import (
    QueryRecord,
    ScenarioConfig,
    ScenarioReport,
    SimulatedSystem,
    default_bloom_params,
    run_scenario,
)

__all__ = [
    "ATTRIBUTES",
    "BenchReport",
    "PHIFile",
    "PlaintextOracle",
    "QueryRecord",
    "ScenarioConfig",
    "ScenarioReport",
    "SimulatedSystem",
    "default_bloom_params",
    "long_state_run",
    "run_bench",
    "run_scenario",
    "synthesize_stream",
]
