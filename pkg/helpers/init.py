import os
import logging

from constants.app_data import LOG_FILE


def init(output_dir=None):

    """
    This function initializes a run by creating its output folder and the roe_lab.log file in it.

    roe_lab.log contains the log of every command run against that folder.
    It records resolved configs, run progress, evaluations and check failures.
    Result files (NDJSON, CSV) never receive log output.

    Args:
        output_dir (str): Folder the command writes into; the working directory when None

    Returns:
        str: The path to the log file
    """
    output_dir = output_dir or os.getcwd()
    os.makedirs(output_dir, exist_ok=True)

    log_path = os.path.join(output_dir, LOG_FILE)
    logging.basicConfig(filename=log_path, level=logging.INFO,
                        format='%(asctime)s - %(levelname)s - %(message)s', force=True)
    logging.info(f"Logging to {log_path}")
    return log_path
