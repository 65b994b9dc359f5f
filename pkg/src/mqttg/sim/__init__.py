from .harness import SimResult, WireRecord, run_scenario
from .oracle import compare_logs, oracle_expected_deliveries
from .report import Metrics, RouteRecord, report, report_csv, report_text
from .scenario import (
    ClientSpec,
    Fixed,
    PublishSpec,
    RandomWalk,
    Scenario,
    Waypoints,
    dump_scenario,
    load_scenario,
    parse_scenario,
    random_scenario,
    validate_scenario,
)

__all__ = [
    "ClientSpec",
    "Fixed",
    "Metrics",
    "PublishSpec",
    "RandomWalk",
    "RouteRecord",
    "Scenario",
    "SimResult",
    "Waypoints",
    "WireRecord",
    "compare_logs",
    "dump_scenario",
    "load_scenario",
    "oracle_expected_deliveries",
    "parse_scenario",
    "random_scenario",
    "report",
    "report_csv",
    "report_text",
    "run_scenario",
    "validate_scenario",
]
