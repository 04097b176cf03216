#!/usr/bin/env python3
"""
Moment-Matching CCA Command-Line Runner
"""

import sys
from pathlib import Path

# Add src directory to Python path
src_path = Path(__file__).parent / "src"
sys.path.insert(0, str(src_path))

from app import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
