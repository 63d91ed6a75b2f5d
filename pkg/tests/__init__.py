"""
Test package

The suite runs against an in-memory run archive unless DATABASE_URI
points elsewhere.
"""
import os

os.environ.setdefault("DATABASE_URI", "sqlite:///:memory:")
