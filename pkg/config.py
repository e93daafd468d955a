"""
Configuration
=============
Numeric defaults and system settings - override any of them with RATECERT_* env vars
"""

import logging
import os


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(f'RATECERT_{name}', default))


def _env_int(name: str, default: int) -> int:
    return int(os.getenv(f'RATECERT_{name}', default))


class Config:
    # ============================================
    # TOLERANCES
    # ============================================

    # Certificate verification slack (relative, on gauges)
    CERT_TOL = _env_float('CERT_TOL', 1e-9)

    # log mu_dual <= log mu_primal + this
    WEAK_DUALITY_TOL = _env_float('WEAK_DUALITY_TOL', 1e-8)

    # y_alpha fixed points are within this of the true fixed point
    FIXED_POINT_TOL = _env_float('FIXED_POINT_TOL', 1e-9)

    # Triangle / geodesic / star-shaped samplers
    SAMPLE_TOL = _env_float('SAMPLE_TOL', 1e-9)

    # Cone interior test: min eigenvalue (coordinate) > threshold * max
    INTERIOR_THRESHOLD = _env_float('INTERIOR_THRESHOLD', 1e-10)

    # Moore-Penrose cutoff relative to the largest eigenvalue
    PINV_CUTOFF = _env_float('PINV_CUTOFF', 1e-10)

    # ============================================
    # SCHEDULES AND HORIZONS
    # ============================================

    # eps = 2^-j ||x||, j = 1..EPS_STEPS
    EPS_STEPS = _env_int('EPS_STEPS', 40)

    # gamma = 2^j, j = 0..GAMMA_STEPS
    GAMMA_STEPS = _env_int('GAMMA_STEPS', 40)

    # Successive schedule values closer than this (relative) count as converged
    SCHEDULE_RTOL = _env_float('SCHEDULE_RTOL', 1e-10)

    # alpha_j = 1 - 2^-j
    ALPHA_LEVELS = _env_int('ALPHA_LEVELS', 20)
    CLI_ALPHA_LEVELS = _env_int('CLI_ALPHA_LEVELS', 10)
    ALPHA_ITERATION_BUDGET = _env_int('ALPHA_ITERATION_BUDGET', 20000)

    DEFAULT_HORIZON = _env_int('DEFAULT_HORIZON', 200)
    GAME_HORIZON = _env_int('GAME_HORIZON', 1000)
    PUMPING_STEPS = _env_int('PUMPING_STEPS', 20)
    LOCAL_SEARCH_ITERATIONS = _env_int('LOCAL_SEARCH_ITERATIONS', 200)

    # Matrix games larger than this are refused
    MAX_GAME_SIZE = 50

    # ============================================
    # SAMPLING
    # ============================================

    DEFAULT_SAMPLES = _env_int('DEFAULT_SAMPLES', 10000)
    DEFAULT_SEED = _env_int('DEFAULT_SEED', 0)
    HOROBALL_SAMPLES = _env_int('HOROBALL_SAMPLES', 1000)

    # Log-scale spread of random cone points
    SAMPLE_SPREAD = _env_float('SAMPLE_SPREAD', 2.0)

    # ============================================
    # SYSTEM SETTINGS
    # ============================================

    THREADS = _env_int('THREADS', 4)

    # Database
    DATABASE_PATH = os.getenv('RATECERT_DB', 'ratecert.db')

    # Logging
    LOG_LEVEL = os.getenv('RATECERT_LOG_LEVEL', 'INFO')
    LOG_FILE = os.getenv('RATECERT_LOG_FILE', '')

    # Web Interface
    WEB_PORT = _env_int('PORT', 5000)

    TOOL_NAME = "ratecert"
    TOOL_VERSION = "1.0.0"


def check_config() -> bool:
    """Check that the configured values make sense"""
    problems = []

    for name in ('CERT_TOL', 'WEAK_DUALITY_TOL', 'FIXED_POINT_TOL', 'SAMPLE_TOL',
                 'INTERIOR_THRESHOLD', 'PINV_CUTOFF', 'SCHEDULE_RTOL'):
        if not getattr(Config, name) > 0:
            problems.append(f"{name} must be positive")

    for name in ('EPS_STEPS', 'GAMMA_STEPS', 'ALPHA_LEVELS', 'CLI_ALPHA_LEVELS',
                 'DEFAULT_HORIZON', 'GAME_HORIZON', 'THREADS', 'DEFAULT_SAMPLES'):
        if getattr(Config, name) < 1:
            problems.append(f"{name} must be at least 1")

    if Config.LOG_LEVEL.upper() not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
        problems.append(f"LOG_LEVEL '{Config.LOG_LEVEL}' is not a logging level")

    if problems:
        print("\n⚠️  Configuration problems:")
        for problem in problems:
            print(f"   - {problem}")
        print("\n💡 Fix the RATECERT_* environment variables\n")
        return False

    print(f"✅ Configuration OK ({Config.THREADS} threads, horizon {Config.DEFAULT_HORIZON})")
    return True


def setup_logging(level: str = None, log_file: str = None):
    """Configure root logging once for CLI and web entry points"""
    handlers = [logging.StreamHandler()]
    log_file = Config.LOG_FILE if log_file is None else log_file
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, (level or Config.LOG_LEVEL).upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )
