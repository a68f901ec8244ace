"""
radisynth Main Entry Point
Dispatches to the pipeline command line.
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from pipeline.cli import main


if __name__ == "__main__":
    sys.exit(main())
