"""
Main entry point for the dial meter reading toolkit.
This file runs the command-line interface; the dashboard is started with
``streamlit run src/ui/dashboard.py``.
"""

import sys
from pathlib import Path

# Add the src directory to Python path
src_path = Path(__file__).parent
sys.path.insert(0, str(src_path))

from ui.cli import main

if __name__ == "__main__":
    sys.exit(main())
