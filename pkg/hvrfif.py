#!/usr/bin/env python3
"""
Command-line entry for hidden-variable recurrent fractal interpolation.

Examples:
    python hvrfif.py list
    python hvrfif.py example 1d-config-1 --out out/curve
    python hvrfif.py solve --config run.json --out out/run
    python hvrfif.py verify --config run.json --seed 7

REQUIREMENTS:
- Dependencies installed via pip install -r requirements.txt
- Optional .env (see env_template.txt) for HVRFIF_THREADS / HVRFIF_OUT_DIR
"""

import os
import sys

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from cli_io import main


if __name__ == "__main__":
    sys.exit(main())
