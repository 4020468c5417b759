import logging
import statistics
from typing import List, Optional

import numpy as np

from config.settings import settings
from models.bpi import BpiSettings, ImprovementMode, TimingSummary
from models.cli import BenchRow
from models.controller import Controller, ValueFunction
from models.pomdp import Pomdp
from repository.bpi.improvement_repo import improvement_repo
from repository.bpi.sparse_repo import sparse_repo
from repository.controller.controller_repo import controller_repo
from repository.evaluation.evaluation_repo import evaluation_repo
from services.bpi_service import bpi_service
from utility.errors import InputError

logger = logging.getLogger(__name__)


class BenchService:
    """Full versus sparse node improvement timed on the same frozen controller at growing sizes."""

    @staticmethod
    def timed_nodes(num_nodes: int, limit: Optional[int]) -> List[int]:
        if limit is None or limit >= num_nodes:
            return list(range(num_nodes))
        return sorted({int(i) for i in np.linspace(0, num_nodes - 1, num=limit)})

    def measure(self, controller: Controller, v: ValueFunction, pomdp: Pomdp, target: int,
                bench_sweeps: int, bench_nodes: Optional[int], cpu_time: bool) -> BenchRow:
        """Time full and sparse improvement of the selected nodes against the same frozen V."""
        clock = bpi_service.clock(cpu_time)
        nodes = self.timed_nodes(controller.size, bench_nodes)
        full_ms: List[float] = []
        sparse_ms: List[float] = []
        sparse_counts: List[int] = []
        sparse_solves: List[int] = []
        mismatch = 0.0
        full_variables = 0

        for _ in range(bench_sweeps):
            for n in nodes:
                start = clock()
                full = improvement_repo.improve_node_full(controller, n, v, pomdp)
                full_ms.append((clock() - start) * 1000.0)
                start = clock()
                reduced = sparse_repo.improve_node_sparse(controller, n, v, pomdp)
                sparse_ms.append((clock() - start) * 1000.0)

                full_variables = full.lp_variable_counts[0]
                sparse_counts += reduced.lp_variable_counts
                sparse_solves.append(reduced.lp_solves)
                mismatch = max(mismatch, abs(full.epsilon - reduced.epsilon))

        return BenchRow(
            target_nodes=target,
            num_nodes=controller.size,
            full_ms=TimingSummary.from_samples(full_ms),
            sparse_ms=TimingSummary.from_samples(sparse_ms),
            full_lp_variables=full_variables,
            sparse_lp_variables_median=float(statistics.median(sparse_counts)),
            sparse_lp_variables_max=max(sparse_counts),
            sparse_lps_per_node_avg=sum(sparse_solves) / len(sparse_solves),
            sparsity=controller_repo.sparsity_stats(controller, pomdp),
            max_epsilon_mismatch=mismatch,
            nodes_timed=len(nodes),
        )

    def bench_compare(
        self,
        pomdp: Pomdp,
        config: BpiSettings,
        ladder: List[int],
        bench_sweeps: int = settings.DEFAULT_BENCH_SWEEPS,
        bench_nodes: Optional[int] = None,
    ) -> List[BenchRow]:
        """
        Grow one controller through the ladder and time both improvements at each size

        Args:
            pomdp: Model to benchmark on
            config: BPI settings used to grow the controller; the mode is forced to sparse
            ladder: Controller sizes to grow to, in any order
            bench_sweeps: Timed repetitions over the selected nodes
            bench_nodes: Time at most this many evenly spaced nodes; all nodes if None

        Returns:
            One row per ladder size, smallest first
        """
        if not ladder or any(size < 1 for size in ladder):
            raise InputError(f"ladder must list positive controller sizes, got {ladder}")
        if bench_sweeps < 1:
            raise InputError("bench_sweeps must be at least 1")
        if bench_nodes is not None and bench_nodes < 1:
            raise InputError("bench_nodes must be at least 1")

        rows: List[BenchRow] = []
        controller: Optional[Controller] = None
        for target in sorted(ladder):
            grow = config.model_copy(update={"mode": ImprovementMode.SPARSE, "max_nodes": target})
            controller, _, _ = bpi_service.run_bpi(pomdp, grow, controller=controller)
            if controller.size < target:
                logger.info(f"Controller converged at {controller.size} nodes before reaching {target}")
            v = evaluation_repo.evaluate(controller, pomdp)
            row = self.measure(controller, v, pomdp, target, bench_sweeps, bench_nodes, config.cpu_time)
            logger.info(
                f"|N|={row.num_nodes}: full {row.full_ms.avg:.2f} ms/node, sparse {row.sparse_ms.avg:.2f} ms/node, "
                f"max |eps_full - eps_sparse| = {row.max_epsilon_mismatch:.2e}"
            )
            rows.append(row)
        return rows


bench_service = BenchService()
