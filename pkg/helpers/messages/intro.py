import logging
import subprocess
from constants.colors import BOLD_CYAN, RESET, YELLOW, DARK_GRAY
from constants.app_data import APP_NAME

COMMAND_PURPOSES = {
    "train": "Trains one run per seed and writes metrics and checkpoints",
    "sweep": "Runs every sweep policy for every seed and aggregates the curves",
    "verify-dp": "Checks the distributional DP properties on seeded random MDPs",
    "eval": "Replays a checkpoint greedily at its final interval and at [0, 1]",
}

def print_intro(command, output_dir):

    """
    Print the intro message

    Args:
        command (str): The subcommand being run
        output_dir (str): Folder receiving the results
    """

    revision = get_code_revision()
    logging.info(f"{command} started, code revision {revision}")

    print("\n")
    print("="*50)
    print(f"{BOLD_CYAN}{APP_NAME}{RESET}")
    print(f"{DARK_GRAY}Code revision: {revision}{RESET}")
    print("="*50)
    print(f"{YELLOW}📋 {command.upper()}:{RESET} {COMMAND_PURPOSES.get(command, '')}")
    print(f"📁 Output folder: {BOLD_CYAN}{output_dir}{RESET}")
    print("="*50)

def get_code_revision():
    """Short commit hash of the working tree, so results can be traced back to the code that produced them."""
    try:
        return subprocess.check_output(
            ["git", "rev-parse", "--short", "HEAD"],
            text=True, stderr=subprocess.DEVNULL
        ).strip()
    except (subprocess.CalledProcessError, FileNotFoundError):
        return "unknown (not a Git repository)"
