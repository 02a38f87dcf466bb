"""Shared utility modules for the MOOSS training pipeline."""
