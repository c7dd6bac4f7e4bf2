import os
import json
import base64
import hashlib
import logging

import numpy as np

from constants.app_data import CHECKPOINT_SCHEMA_VERSION
from helpers.learner_utils import QTable
from helpers.quantile_utils import RiskInterval


def encode_key(key):
    """
    Base64 text form of an observation key.

    Args:
        key (bytes): The observation key

    Returns:
        str: ASCII base64 of the key
    """
    return base64.b64encode(key).decode("ascii")


def decode_key(text):
    return base64.b64decode(text.encode("ascii"))


def _unique_tables(tables):
    # Shared-table runs hold one object per agent slot; store it once.
    unique = []
    for table in tables:
        if not any(table is seen for seen in unique):
            unique.append(table)
    return unique


def checkpoint_lines(tables, config, seed, final_interval: RiskInterval):
    """
    NDJSON lines of a checkpoint: header first, then entries sorted by (agent, key, action).

    Float values are written with shortest round-trip repr, so equal tables
    give byte-equal files on every platform.
    """
    stored = _unique_tables(tables)
    header = {
        "type": "header",
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "seed": seed,
        "n_agents": len(tables),
        "n_tables": len(stored),
        "n_actions": stored[0].n_actions if stored else 0,
        "n_quantiles": stored[0].n_quantiles if stored else 0,
        "final_interval": list(final_interval.as_tuple()),
        "config": config,
    }
    yield json.dumps(header, sort_keys=False)
    for agent, table in enumerate(stored):
        for key in sorted(table.rows):
            row = table.rows[key]
            for action in range(table.n_actions):
                yield json.dumps({
                    "type": "entry",
                    "agent": agent,
                    "obs_key": encode_key(key),
                    "action": action,
                    "visits": int(table.visits[key][action]),
                    "quantiles": [float(v) for v in row[action]],
                })


def compute_checksum(text):
    """
    Compute a checksum for checkpoint text.
    Two runs with identical tables and header produce the same checksum.

    Args:
        text (str): The checkpoint content

    Returns:
        str: sha256 hex digest
    """
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def save_checkpoint(path, tables, config, seed, final_interval: RiskInterval):
    """Write the checkpoint file and return its checksum."""
    text = "".join(line + "\n" for line in checkpoint_lines(tables, config, seed, final_interval))
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    checksum = compute_checksum(text)
    logging.info(f"Checkpoint written to {path} ({sum(len(t) for t in _unique_tables(tables))} keys, sha256 {checksum[:12]})")
    return checksum


def load_checkpoint(path):
    """
    Read a checkpoint back.

    Args:
        path (str): The checkpoint file

    Returns:
        tuple: (header dict, list of QTable with one slot per agent)
    """
    with open(path, "r", encoding="utf-8") as f:
        lines = [line for line in f.read().split("\n") if line]
    if not lines:
        raise ValueError(f"Empty checkpoint file: {path}")

    header = json.loads(lines[0])
    if header.get("type") != "header":
        raise ValueError(f"Checkpoint {path} does not start with a header line")
    if header.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise ValueError(f"Unsupported checkpoint schema {header.get('schema_version')}, "
                         f"expected {CHECKPOINT_SCHEMA_VERSION}")

    n_actions, n_quantiles = header["n_actions"], header["n_quantiles"]
    stored = [QTable(n_actions, n_quantiles) for _ in range(header["n_tables"])]
    for line in lines[1:]:
        entry = json.loads(line)
        table = stored[entry["agent"]]
        key = decode_key(entry["obs_key"])
        table.set(key, entry["action"], np.array(entry["quantiles"], dtype=float))
        table.visits[key][entry["action"]] = entry.get("visits", 0)

    if len(stored) == 1:
        tables = stored * header["n_agents"]
    elif len(stored) == header["n_agents"]:
        tables = stored
    else:
        raise ValueError(f"Checkpoint holds {len(stored)} tables for {header['n_agents']} agents")
    logging.info(f"Loaded checkpoint {path} with {len(stored)} table(s)")
    return header, tables
