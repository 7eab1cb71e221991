"""Simulated LoRaWAN temperature sensing of urban surfaces."""

__version__ = "0.1.0"
