# Root conftest: pin process settings before any test module (and thus semalign.config) loads
import os

os.environ["SEMALIGN_LOG_LEVEL"] = "WARNING"
# Single-threaded unless a test sets its own value
os.environ["SEMALIGN_THREADS"] = "1"
