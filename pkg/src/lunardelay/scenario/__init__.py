"""Scenario configuration, link screening, batch solves and output files."""
from .config import ConfigError, ScenarioConfig, config_summary, load_config
from .engine import (BinSummary, LinkOutcome, LinkRecord, LinkTask, RunResult, SolveContext,
                     bin_index, process_link, run_scenario, summarize_bins)
from .links import LinkGeometry, enumerate_links, screen_links
from .outputs import RECORD_COLUMNS, emit_outputs, preflight

__all__ = [
    "BinSummary", "ConfigError", "LinkGeometry", "LinkOutcome", "LinkRecord", "LinkTask",
    "RECORD_COLUMNS", "RunResult", "ScenarioConfig", "SolveContext", "bin_index",
    "config_summary", "emit_outputs", "enumerate_links", "load_config", "preflight",
    "process_link", "run_scenario", "screen_links", "summarize_bins",
]
