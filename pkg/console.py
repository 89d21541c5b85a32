# console.py - colored status lines for the workbench CLI and library warnings

import sys
from typing import Dict, TextIO, Optional
from colorama import init, Fore, Style

# Initialize Colorama for cross-platform compatibility
init(autoreset=True)

# --- Color Mapping for Output ---
COLOR_MAP: Dict[str, str] = {
    'SUCCESS': Fore.GREEN + Style.BRIGHT,
    'ERROR': Fore.RED + Style.BRIGHT,
    'WARNING': Fore.YELLOW + Style.BRIGHT,
    'HEADER': Fore.CYAN + Style.BRIGHT,
    'INFO': Fore.BLUE,
    'NORMAL': Fore.WHITE
}

_state = {'quiet': False}


def set_quiet(quiet: bool):
    """Silences status lines (warnings and errors still reach stderr)."""
    _state['quiet'] = quiet


def is_quiet() -> bool:
    return _state['quiet']


def print_colored(message: str, color_key: str, stream: Optional[TextIO] = None):
    """Prints a message using a predefined color."""
    print(f"{COLOR_MAP.get(color_key, COLOR_MAP['NORMAL'])}{message}{Style.RESET_ALL}",
          file=stream or sys.stdout)


def step(message: str):
    """One pipeline stage line, e.g. '🔬 Computing K-theory...'."""
    if not _state['quiet']:
        print_colored(message, 'INFO', stream=sys.stderr)


def success(message: str):
    if not _state['quiet']:
        print_colored(f"✅ {message}", 'SUCCESS', stream=sys.stderr)


def warn(message: str):
    print_colored(f"[WARNING] {message}", 'WARNING', stream=sys.stderr)


def error(message: str):
    print_colored(f"❌ {message}", 'ERROR', stream=sys.stderr)
