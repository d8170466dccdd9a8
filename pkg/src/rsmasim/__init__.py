"""Link-level simulator for a two-user MISO RSMA downlink with SIC and joint-demapping receivers."""

__version__ = "0.1.0"
