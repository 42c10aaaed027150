"""Pydantic models for configurations, reports and file headers."""
