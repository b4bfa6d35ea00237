"""Software testbed for an EV charger front end coupled to a distribution feeder."""

__version__ = "0.1.0"
