"""Finite-key rate engine and event-level simulator for post-matched
two-photon twin-field QKD over an untrusted middle node."""

__version__ = "0.1.0"
