"""Map-based event-inertial tracking with a deterministic simulator."""

__version__ = "0.1.0"
