import sys
import time
import traceback
from typing import Callable, Dict

from dynamics.errors import (
    ConfigError,
    DegenerateFit,
    NoConvergence,
    SingularityExhausted,
    SingularityHit,
)
from handlers.certify_handler import run_certify, run_scan
from handlers.density_handler import run_density, run_entropy, run_stability
from handlers.partition_handler import run_partition_experiment
from handlers.stats_handler import run_clt, run_correlations, run_deviations
from handlers.tail_handler import run_tail
from handlers.validate_handler import run_validate
from .config import ExperimentConfig
from .output import RunOutput

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
EXIT_SINGULARITY = 4

HANDLERS: Dict[str, Callable[[ExperimentConfig, RunOutput], dict]] = {
    "validate": run_validate,
    "tail": run_tail,
    "partition": run_partition_experiment,
    "certify": run_certify,
    "scan": run_scan,
    "density": run_density,
    "stability": run_stability,
    "correlations": run_correlations,
    "deviations": run_deviations,
    "clt": run_clt,
    "entropy": run_entropy,
}


def exit_status(error: BaseException) -> int:
    if isinstance(error, (ConfigError, ValueError)):
        return EXIT_INVALID
    if isinstance(error, (NoConvergence, DegenerateFit)):
        return EXIT_NUMERICAL
    if isinstance(error, (SingularityHit, SingularityExhausted)):
        return EXIT_SINGULARITY
    return EXIT_FAILURE


def run_experiment(config: ExperimentConfig) -> int:
    """
    Run one experiment end to end

    Returns:
        exit status: 0 ok, 2 invalid input, 3 numerical failure,
        4 singularity, 1 anything else
    """
    output = RunOutput(config.experiment, config.output_dir)
    seeds = {"run.seed": config.seed}
    print(f"🚀 {config.experiment}: a={config.map.a}, s={config.map.s}, seed={config.seed}, "
          f"workers={config.workers}", file=sys.stderr)
    started = time.perf_counter()

    try:
        results = HANDLERS[config.experiment](config, output)
    except (ConfigError, ValueError) as e:
        # invalid input leaves no files behind
        output.discard()
        print(f"❌ Invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (NoConvergence, DegenerateFit, SingularityHit, SingularityExhausted) as e:
        status = exit_status(e)
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        output.write_summary(config.echo, seeds, status, {}, error=f"{type(e).__name__}: {e}")
        output.commit()
        return status
    except Exception as e:
        output.discard()
        print(f"❌ Error: {e}", file=sys.stderr)
        traceback.print_exc()
        return EXIT_FAILURE

    output.write_summary(config.echo, seeds, EXIT_OK, results)
    files = output.commit()
    elapsed = time.perf_counter() - started
    print(f"✅ {config.experiment} done in {elapsed:.1f}s: {len(files)} files in {config.output_dir}", file=sys.stderr)
    return EXIT_OK
