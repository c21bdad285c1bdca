import sys
from pathlib import Path

# Test helpers (oracles, generators, reference writer) live next to the tests.
sys.path.insert(0, str(Path(__file__).parent))
