"""
Global Configuration for the Lab

Every value can be overridden from the environment (or a .env file
picked up by the flask command).
"""
import os
import logging

# Get configuration from environment
DATABASE_URI = os.getenv("DATABASE_URI", "sqlite:///passage_lab.db")

# Configure SQLAlchemy
SQLALCHEMY_DATABASE_URI = DATABASE_URI
SQLALCHEMY_TRACK_MODIFICATIONS = False

LOGGING_LEVEL = getattr(logging, os.getenv("LOG_LEVEL", "INFO").upper(), logging.INFO)

# Monte Carlo defaults
SEED_ENV = "PASSAGE_LAB_SEED"
DEFAULT_SEED = 20240101
DEFAULT_STEP = 0.01
DEFAULT_CONFIDENCE = 0.95
DEFAULT_WORKERS = os.cpu_count() or 1
DEFAULT_CHUNK_SIZE = int(os.getenv("CHUNK_SIZE", "1024"))
SURVIVOR_FLOOR = 10
CLIP_THRESHOLD = float(os.getenv("CLIP_THRESHOLD", "1e-8"))

# Quadrature defaults
DEFAULT_REL_TOL = 1e-9
DEFAULT_ABS_TOL = 1e-12
DEFAULT_MAX_SUBDIVISIONS = 200

# Discretization budget
DEFAULT_BUDGET_K = 10.0

# Artifacts
DEFAULT_OUT_DIR = os.getenv("OUT_DIR", "runs")
MANIFEST_SCHEMA_VERSION = 1
