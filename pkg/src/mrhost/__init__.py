"""mrhost: telemetry aggregation and in-situ visualization geometry for
co-located multiuser MR sessions.

Simulated (or real) headset clients stream poses, metrics and events over a
newline-delimited JSON protocol; a session engine tracks per-visitor state,
detects offline/tracking/calibration events and decimates movement history;
a pure geometry layer turns that state into renderer-agnostic primitives
which the server broadcasts to dashboards over WebSocket.
"""

__version__ = "0.1.0"
