#!/usr/bin/python3
"""Command line interface.

Usage
```
python src gen gap --k 2 --output gap-k2.json
python src gen random --n 20 --scenarios 10 --p 10 --seed 7
python src solve --input gap-k2.json --method derand
python src verify-gap --k 3
python src bench --suite instances/ --methods random,derand,ram --seeds 5
```

Exit codes: 0 on success, 2 on invalid input or usage, 3 if the enumeration
budget is exceeded and 1 on any other failure.
"""
from argparse import ArgumentParser, Namespace, RawTextHelpFormatter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from io import StringIO
from typing import List, Optional, Sequence
import csv
import sys
import time

import io_util
from io_util import add_default_args, list_files, log, read_file, write_output
from selecting_items.instance import InstanceError, gen_gap, gen_random, parse, serialize
from selecting_items.solver import EXACT_BUDGET, METHODS, BudgetError, \
    format_gap, format_json, format_text, solve_approx, solve_exact, verify_gap
from util import format_number

EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_BUDGET = 3


class EmptySuiteError(ValueError):
    pass


################################################################################
# Commands
################################################################################


def cmd_gen(args: Namespace):
    if args.family == 'gap':
        instance = gen_gap(args.k, args.p, args.n, args.max_scenarios)
    else:
        instance = gen_random(args.n, args.scenarios, args.p, args.max_cost, args.seed)

    write_output(serialize(instance), args.output)


def cmd_solve(args: Namespace):
    instance = parse(read_file(args.input))
    if args.method == 'exact':
        report = solve_exact(instance, args.budget)
    else:
        report = solve_approx(instance, args.method, args.seed, exact=args.exact_lp)

    io_util.debug(f'{args.method}: max cost {report.max_cost}, C* {report.lower_bound}')
    format_report = format_json if args.format == 'json' else format_text
    write_output(format_report(report, timings=args.timings), args.output)


def cmd_verify_gap(args: Namespace):
    report = verify_gap(args.k, args.p, args.n, args.budget, exact=args.exact_lp)
    write_output(format_gap(report), args.output)


################################################################################
# Benchmarks
################################################################################


@dataclass(frozen=True)
class BenchRow:
    instance: str
    n: int
    K: int
    p: int
    method: str
    lower_bound: str
    max_cost: int
    ratio: str
    certified_bound: str
    wall_time_us: int
    seed: Optional[int] = None

    @staticmethod
    def columns() -> List[str]:
        return [f.name for f in fields(BenchRow)]

    def to_csv(self) -> List[str]:
        return ['' if v is None else str(v) for v in astuple(self)]

    @staticmethod
    def from_csv(row: dict) -> 'BenchRow':
        def integer(key):
            return None if row[key] == '' else int(row[key])

        return BenchRow(row['instance'], integer('n'), integer('K'), integer('p'),
                        row['method'], row['lower_bound'], integer('max_cost'),
                        row['ratio'], row['certified_bound'],
                        integer('wall_time_us'), integer('seed'))


def format_bench(rows: Sequence[BenchRow]) -> str:
    out = StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(BenchRow.columns())
    writer.writerows(row.to_csv() for row in rows)
    return out.getvalue()


def parse_bench(text: str) -> List[BenchRow]:
    return [BenchRow.from_csv(row) for row in csv.DictReader(StringIO(text))]


def bench_run(task: tuple) -> BenchRow:
    """Solve a single (instance, method, seed) combination.
    This is a top-level function, s.t. it can be sent to worker processes.
    """
    instance_id, instance, method, seed, budget, exact = task
    start = time.perf_counter_ns()
    if method == 'exact':
        report = solve_exact(instance, budget)
    else:
        report = solve_approx(instance, method, seed, exact=exact)
    wall_time = (time.perf_counter_ns() - start) // 1000

    return BenchRow(instance_id, instance.n, instance.K, instance.p, method,
                    format_number(report.lower_bound), report.max_cost,
                    format_number(report.approx_ratio),
                    format_number(report.certified_bound), wall_time, report.seed)


def bench_tasks(args: Namespace) -> List[tuple]:
    files = list_files(args.suite)
    if not files:
        raise EmptySuiteError(f'no instance files in {args.suite}')

    methods = parse_methods(args.methods)
    tasks = []
    for path in files:
        instance = parse(read_file(path))
        for method in methods:
            # deterministic methods are run once
            seeds = range(args.seeds) if method == 'random' else [None]
            tasks.extend((path.name, instance, method, seed, args.budget, args.exact_lp)
                         for seed in seeds)
    return tasks


def cmd_bench(args: Namespace):
    tasks = bench_tasks(args)
    io_util.debug(f'running {len(tasks)} benchmarks with {args.jobs} job(s)')
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as executor:
            rows = list(executor.map(bench_run, tasks))
    else:
        rows = [bench_run(task) for task in tasks]

    write_output(format_bench(rows), args.output)


def parse_methods(text: str) -> List[str]:
    methods = [m.strip() for m in text.split(',') if m.strip()]
    for method in methods:
        if method not in METHODS + ('exact',):
            raise ValueError(f'unknown method {method!r}')
    if not methods:
        raise ValueError('no methods given')
    return methods


################################################################################
# Parser
################################################################################


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    add_default_args(common)
    common.add_argument('--output', '-o', default=None,
                        help='output file; defaults to stdout')

    parser = ArgumentParser(prog='selecting-items', description=__doc__,
                            formatter_class=RawTextHelpFormatter)
    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('gen', help='generate an instance')
    families = gen.add_subparsers(dest='family', required=True)

    gap = families.add_parser('gap', parents=[common],
                              help='the integrality gap family')
    gap.add_argument('--k', type=int, required=True)
    gap.add_argument('--p', type=int, default=None, help='defaults to k')
    gap.add_argument('--n', type=int, default=None, help='defaults to k²+(p-k)')
    gap.add_argument('--max-scenarios', type=int, default=None)

    rand = families.add_parser('random', parents=[common],
                               help='uniformly random costs')
    rand.add_argument('--n', type=int, default=20)
    rand.add_argument('--scenarios', type=int, default=10)
    rand.add_argument('--p', type=int, default=10)
    rand.add_argument('--max-cost', type=int, default=100)
    rand.add_argument('--seed', type=int, default=0)
    for family in (gap, rand):
        family.set_defaults(func=cmd_gen)

    solve = commands.add_parser('solve', parents=[common], help='solve an instance')
    solve.add_argument('--input', '-i', required=True)
    solve.add_argument('--method', choices=METHODS + ('exact',), default='derand')
    solve.add_argument('--seed', type=int, default=None,
                       help='seed of the random method; drawn if omitted')
    solve.add_argument('--format', choices=('json', 'text'), default='json')
    solve.add_argument('--budget', type=int, default=EXACT_BUDGET,
                       help='max. number of subsets to enumerate for the exact method')
    solve.add_argument('--exact-lp', action='store_true',
                       help='solve the LPs in rational arithmetic')
    solve.add_argument('--timings', action='store_true',
                       help='include stage timings in the report')
    solve.set_defaults(func=cmd_solve)

    verify = commands.add_parser('verify-gap', parents=[common],
                                 help='verify the integrality gap of a gap instance')
    verify.add_argument('--k', type=int, required=True)
    verify.add_argument('--p', type=int, default=None)
    verify.add_argument('--n', type=int, default=None)
    verify.add_argument('--budget', type=int, default=EXACT_BUDGET)
    verify.add_argument('--exact-lp', action='store_true')
    verify.set_defaults(func=cmd_verify_gap)

    bench = commands.add_parser('bench', parents=[common],
                                help='solve all instances in a folder; emit CSV')
    bench.add_argument('--suite', required=True, help='folder with .json or .csv instances')
    bench.add_argument('--methods', default=','.join(METHODS))
    bench.add_argument('--seeds', type=int, default=1,
                       help='number of seeds for the random method')
    bench.add_argument('--jobs', type=int, default=1)
    bench.add_argument('--budget', type=int, default=EXACT_BUDGET)
    bench.add_argument('--exact-lp', action='store_true')
    bench.set_defaults(func=cmd_bench)

    return parser


def main(argv: Sequence[str] = None) -> int:
    args = build_parser().parse_args(argv)
    io_util.set_verbosity(args)

    try:
        args.func(args)
    except BudgetError as e:
        log(io_util.error(f'budget exceeded: {e}'))
        return EXIT_BUDGET
    except (InstanceError, ValueError, OSError) as e:
        log(io_util.error(f'invalid input: {e}'))
        return EXIT_INVALID
    except (AssertionError, RuntimeError) as e:
        log(io_util.error(f'failed: {e}'))
        return EXIT_FAILURE

    return 0


if __name__ == '__main__':
    sys.exit(main())
