RESET = "\033[0m"               # Reset color
BOLD_CYAN = "\033[1;36m"        # Bold Cyan for headings and paths
YELLOW = "\033[1;93m"           # Bright Yellow for warnings
MAGENTA = "\033[0;35m"          # Magenta for progress updates
RED = "\033[0;31m"              # Red for errors and failed checks
GREEN = "\033[0;32m"            # Green for success and passed checks
DARK_GRAY = "\033[1;30m"        # Dark Gray for non-important text
PINK = "\033[1;35m"             # Pink for numbers
