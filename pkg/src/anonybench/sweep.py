"""
Limiter / penalty-weight sweep. Every cell runs the full pipeline from a
shared initialisation; rows are written in grid order by a single writer,
after every finished cell, so an interrupted sweep resumes where it stopped.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from tqdm import tqdm

from .checkpoint import Checkpoint, atomic_write_text
from .config import RunConfig
from .exception import AnonybenchException, ConfigException
from .metrics import MetricsReport, read_csv_rows, render_csv
from .pipeline import SplitCache, run_pipeline
from .trainer import initialize

logger = logging.getLogger(__name__)

STATUS_OK = 'ok'
STATUS_FAILED = 'failed'


@dataclass(frozen=True)
class Cell:
    limiter: float
    lambda_penalty: float

    def run_id(self, seed: int) -> str:
        return f'B{self.limiter:g}_lambda{self.lambda_penalty:g}_seed{seed}'


def sweep_cells(config: RunConfig, limiters: Optional[Sequence[float]] = None,
                lambdas: Optional[Sequence[float]] = None) -> List[Cell]:
    """
    Grid of the sweep: the cross product when ``sweep_cross`` is set,
    otherwise every B at the fixed lambda followed by every lambda at the
    fixed B, without repeating a cell.
    """
    train = config.train
    limiters = list(train.sweep_limiters if limiters is None else limiters)
    lambdas = list(train.sweep_lambdas if lambdas is None else lambdas)
    if not limiters:
        raise ConfigException('The sweep needs at least one limiter value', 'sweep_limiters')
    if not lambdas:
        raise ConfigException('The sweep needs at least one lambda value', 'sweep_lambdas')
    if train.sweep_cross:
        cells = [Cell(b, lam) for b in limiters for lam in lambdas]
    else:
        cells = [Cell(b, train.sweep_fixed_lambda) for b in limiters]
        cells += [Cell(train.sweep_fixed_limiter, lam) for lam in lambdas]
    return list(dict.fromkeys(cells))


def _failed_reports(config: RunConfig, cell: Cell, error: AnonybenchException) -> List[MetricsReport]:
    train = config.train
    return [
        MetricsReport(
            protocol=protocol, config_digest=config.digest(), run_id=cell.run_id(train.seed),
            limiter=cell.limiter, lambda_penalty=cell.lambda_penalty, mu=train.mu, tau=train.tau, seed=train.seed,
            status=f'{STATUS_FAILED}: {type(error).__name__}'
        )
        for protocol in train.sweep_protocols
    ]


def run_cell(config: RunConfig, cell: Cell, splits: SplitCache, initial: Checkpoint) -> List[MetricsReport]:
    """ Full pipeline for one grid cell; a benchmark error becomes failure rows. """
    cell_config = config.replace(limiter=cell.limiter, lambda_penalty=cell.lambda_penalty).validate()
    run_id = cell.run_id(config.train.seed)
    try:
        result = run_pipeline(cell_config, splits, initial, config.train.sweep_protocols, run_id)
    except AnonybenchException as exc:
        logger.warning('Sweep cell %s failed: %s', run_id, exc.message)
        return _failed_reports(cell_config, cell, exc)
    logger.info('Sweep cell %s done', run_id)
    return result.reports


def _run_cell_job(args: Tuple[RunConfig, Cell, SplitCache, bytes]) -> List[MetricsReport]:
    config, cell, splits, initial = args
    return run_cell(config, cell, splits, Checkpoint.from_bytes(initial))


def _completed(csv_path: Optional[Path]) -> Dict[str, List[Dict[str, str]]]:
    if csv_path is None or not csv_path.exists():
        return {}
    done: Dict[str, List[Dict[str, str]]] = {}
    for row in read_csv_rows(csv_path.read_text(encoding='utf-8')):
        if row.get('status') == STATUS_OK:
            done.setdefault(row['run_id'], []).append(row)
    return done


def _report_from_row(row: Dict[str, str], num_attributes: int) -> MetricsReport:
    def value(key: str) -> Optional[float]:
        return float(row[key]) if row.get(key) else None

    return MetricsReport(
        protocol=row['protocol'], run_id=row['run_id'],
        top1=value('top1'), cmap=value('cmap'), f1=value('f1'),
        ap=[value(f'ap_attr_{k}') for k in range(num_attributes)],
        limiter=float(row['B']), lambda_penalty=float(row['lambda']), mu=float(row['mu']), tau=float(row['tau']),
        seed=int(row['seed']), l_penalty_final=value('l_penalty_final'),
        wall_seconds=value('wall_seconds') or 0.0, status=row['status'],
    )


def run_sweep(
        config: RunConfig,
        limiters: Optional[Sequence[float]] = None,
        lambdas: Optional[Sequence[float]] = None,
        splits: Optional[SplitCache] = None,
        csv_path: Optional[Path] = None,
        jobs: int = 1
) -> List[MetricsReport]:
    """
    Runs every cell of the grid and returns the reports in grid order, one
    per (cell, protocol). Cells already present with status ``ok`` in
    ``csv_path`` are kept and not recomputed.
    """
    cells = sweep_cells(config, limiters, lambdas)
    splits = splits or SplitCache(config)
    num_attributes = config.data.num_attributes
    seed = config.train.seed
    done = _completed(csv_path)
    results: Dict[Cell, List[MetricsReport]] = {}
    for cell in cells:
        rows = done.get(cell.run_id(seed))
        if rows and {r['protocol'] for r in rows} >= set(config.train.sweep_protocols):
            results[cell] = [_report_from_row(r, num_attributes) for r in rows]
    if results:
        logger.warning('Resuming sweep: %d of %d cells already complete', len(results), len(cells))
    pending = [cell for cell in cells if cell not in results]

    def flush() -> None:
        if csv_path is not None:
            ordered = [report for cell in cells if cell in results for report in results[cell]]
            atomic_write_text(csv_path, render_csv(ordered, num_attributes))

    if pending:
        action, privacy = splits.get()
        initial = initialize(config, action, privacy).checkpoint()
        for cell, reports in tqdm(_execute(config, pending, splits, initial, jobs),
                                  desc='sweep', total=len(pending), disable=None):
            results[cell] = reports
            flush()
    flush()
    return [report for cell in cells for report in results[cell]]


def _execute(config: RunConfig, cells: List[Cell], splits: SplitCache, initial: Checkpoint,
             jobs: int) -> Iterator[Tuple[Cell, List[MetricsReport]]]:
    if jobs <= 1:
        for cell in cells:
            yield cell, run_cell(config, cell, splits, initial)
        return
    blob = initial.to_bytes()
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        jobs_args = [(config, cell, splits, blob) for cell in cells]
        yield from zip(cells, pool.map(_run_cell_job, jobs_args))
