import os

# Random stream ids (see game_core.seed_stream)
STREAM_ENV = 0
STREAM_ACTOR = 1
STREAM_BUFFER = 2
STREAM_OPPONENT = 3
STREAM_INIT = 4
STREAM_LOSS = 5
STREAM_DERIVE = 6
# Seat i samples its mixture from stream STREAM_SEAT_BASE + i
STREAM_SEAT_BASE = 16

# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_CHECKPOINT = 4
EXIT_TRACE = 5

# Network defaults
HIDDEN_SIZES = (64, 64)
ACTOR_ACTIVATION = 'mish'
CRITIC_ACTIVATION = 'relu'
TIME_EMBED_FREQUENCIES = 4

# Diffusion defaults
DIFFUSION_STEPS = 8
SCHEDULE = 'linear'
BETA_MIN = 1e-4
BETA_MAX = 0.02
VP_B_MIN = 0.1
VP_B_MAX = 10.0

# Learner defaults
ENV_STEPS = 5000
WARMUP_STEPS = 256
BATCH_SIZE = 256
BUFFER_CAPACITY = 100_000
ACTOR_LR = 3e-4
CRITIC_LR = 3e-4
TAU = 0.005
ETA = 0.1
GUIDANCE_STEPS = 3
LAMBDA = 1.0
# Weight of the denoising loss on replayed actions next to the guided term
DENOISE_WEIGHT = 0.1
TEMPERATURE = 1.0
WEIGHT_CLIP = 10.0
WEIGHT_BASELINE = 'min'
ENTROPY_WEIGHT = 0.2
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_INTERVAL = 1000

# Evaluation defaults
EVAL_EPISODES = 100
GRID_N = 41
# Episodes per grid point when grid best responses drive fictitious play
GRID_EPISODES = 200

# Files
DEFAULT_OUT_DIR = 'runs'
METRICS_COLUMNS = [
    'iteration', 'agent', 'mean_return', 'actor_loss', 'critic_loss',
    'eps_ego', 'eps_opp', 'eps_total', 'wall_seconds',
]
SIDE_NAMES = ('ego', 'opp')


def max_workers() -> int:
    """Worker cap for parallel payoff estimation (DIFFFP_THREADS)."""
    try:
        return max(1, int(os.environ.get('DIFFFP_THREADS', '1')))
    except ValueError:
        return 1


def debug_enabled() -> bool:
    """Finite-value checks on every network pass (DIFFFP_DEBUG=1)."""
    return os.environ.get('DIFFFP_DEBUG', '') not in ('', '0')
