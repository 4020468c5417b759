from .solve_router import router as solve_router
from .bench_router import router as bench_router
from .eval_router import router as eval_router
from .gen_router import router as gen_router

# List of all command groups mounted on the root app
__all__ = [
    "solve_router",
    "bench_router",
    "eval_router",
    "gen_router",
]
