"""Simulator and trainers for UABS fleet trajectory learning over vehicular users."""

__version__ = "0.1.0"
