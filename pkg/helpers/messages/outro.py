from constants.colors import GREEN, RED, RESET, YELLOW, PINK
from constants.app_data import APP_NAME
import logging

def print_outro(output_dir, summary, hours, minutes, seconds, ok=True):

    """
    Print the outro message

    Args:
        output_dir (str): The path to the output folder
        summary (dict): Label -> value lines to report
        hours (int): Hours taken
        minutes (int): Minutes taken
        seconds (int): Seconds taken
        ok (bool): Whether the command succeeded
    """

    print()
    print("="*50)
    if ok:
        print(f"{GREEN}✅ Completed!{RESET}")
    else:
        print(f"{RED}❌ Completed with failures{RESET}")
    print(f"📁 Output Folder: {output_dir}")
    for label, value in summary.items():
        logging.info(f"{label}: {value}")
        print(f"  • {label}: {PINK}{value}{RESET}")
    print(f"🕑 Total time taken: {hours:02d}:{minutes:02d}:{seconds:02d}")
    print()
    print(f"{YELLOW}Thank you for using the {APP_NAME}!{RESET}")
    print("="*50 + "\n")
