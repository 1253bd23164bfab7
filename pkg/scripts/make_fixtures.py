#!/usr/bin/env python3
"""Regenerate the frozen capture fixtures under tests/fixtures/.

The ten-connection capture pins stream indexing behavior: ten sequential
connections in first-seen order must index 0..9.  Timestamps and payload
sizes are fixed constants, so regeneration is byte-identical.
"""

from pathlib import Path

from agenttraffic.synthetic import sequential_sessions_capture

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    target = FIXTURES / "ten_connections.pcap"
    target.write_bytes(sequential_sessions_capture(10))
    print(f"wrote {target} ({target.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
