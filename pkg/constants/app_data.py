"""
Application constants for output files and record schemas.

This module defines the names used throughout the ROE lab for the files a
run writes into its output directory and the schema versions stamped into
them.
"""


APP_NAME = "ROE LAB: RISK-BASED OPTIMISTIC EXPLORATION"


# Output Constants
# ---------------
DEFAULT_OUTPUT_DIR = "runs"
"""
Output directory used when neither the config nor --out names one.
Created on demand, relative to the current working directory.
"""

LOG_FILE = "roe_lab.log"
"""
Log file written inside the output directory.
Holds the run's logging output; never parsed by the tool itself.
"""

RESOLVED_CONFIG_FILE = "resolved_config.yaml"
"""
YAML echo of the experiment config after defaults are applied.
Re-running with this file reproduces the run.
"""

METRICS_FILE = "metrics_seed{seed}.ndjson"
"""
Per-seed metric stream, one JSON object per line.

Line 1 is the header:
{
    "type": "header",
    "schema_version": METRIC_SCHEMA_VERSION,
    "config": resolved config (dict),
    "seed": run seed (int)
}
then one "episode" row per finished episode and one "eval" row per
evaluation point, in step order.
"""

CHECKPOINT_FILE = "checkpoint_seed{seed}.ndjson"
"""
Final tables of a run: a header line followed by one line per
(agent, observation, action) entry, sorted.
"""

TRAJECTORY_FILE = "trajectory_seed{seed}.ndjson"
"""
Optional per-step dump written when dump_trajectories is enabled.
"""

SWEEP_RUNS_FILE = "sweep_runs.csv"
"""
One row per (policy, seed) run of a sweep with its status and final return.
"""

SWEEP_SUMMARY_FILE = "sweep_summary.csv"
"""
Aggregated curves: columns policy, t, n_runs, mean, p25, p75.
"""

DP_REPORT_FILE = "dp_report.ndjson"
"""
One CheckReport record per line from the DP verification battery.
"""


# Schema Constants
# ---------------
METRIC_SCHEMA_VERSION = 1
CHECKPOINT_SCHEMA_VERSION = 1
CONFIG_SCHEMA_VERSION = 1
