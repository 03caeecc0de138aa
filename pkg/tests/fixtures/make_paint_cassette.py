"""Regenerate the committed paint-mixing cassette from the scripted
trajectory. Run from the repository root:

    python tests/fixtures/make_paint_cassette.py
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from fixtures.paint_mixing import record_cassette  # noqa: E402

if __name__ == "__main__":
    path = record_cassette()
    print(f"wrote {path}")
