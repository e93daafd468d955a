"""
Rate Runner
===========
Runs rate / certify / check-space / game / horoballs commands and records them
"""

import argparse
import json
import logging
import sys
import traceback
from typing import Dict, Optional

import cli_io
import suite
from config import Config, setup_logging
from database import Database
from errors import ProblemError, RateCertError


class RateRunner:
    """Routes a problem to its command and persists the outcome"""

    def __init__(self, db_path: str = None):
        self.db = Database(Config.DATABASE_PATH if db_path is None else db_path)
        self.logger = logging.getLogger(__name__)

    def execute(self, command: str, problem: Dict, text: str = None) -> Dict:
        """
        Run one command:
        1. Validate the problem and fill defaults
        2. Run the command
        3. Record the report (or the failure)
        """
        run_id = None
        try:
            if command not in cli_io.HANDLERS:
                raise ProblemError(f"unknown command '{command}'", field='command')
            if text is not None:
                problem = cli_io.parse_problem(text, command)
            else:
                cli_io.validate_problem(problem)
                problem = cli_io.fill_defaults(problem, command)

            run_id = self.db.add_run(command, cli_io.fingerprint(problem), problem['seed'], problem.get('name'))
            self.logger.info(f"🚀 {command} run {run_id}: {problem.get('name', 'unnamed problem')}")

            report = cli_io.HANDLERS[command](problem)
            status = report['status']
            interval = report.get('interval', {})
            self.db.complete_run(run_id, status, interval.get('lower'), interval.get('upper'),
                                 cli_io.emit_report(report))

            icon = {'verified': '✅', 'falsified': '❌'}.get(status, '⚠️')
            self.logger.info(f"{icon} {command} run {run_id}: {status}")
            self.db.log('INFO', f"{command} run {run_id}: {status}", {'fingerprint': report['fingerprint']})
            return {
                'success': True,
                'run_id': run_id,
                'status': status,
                'exit_code': cli_io.EXIT_CODES[status],
                'report': report,
            }

        except Exception as e:
            error_msg = str(e)
            error_trace = traceback.format_exc()

            self.logger.error(f"❌ {command} failed: {error_msg}")
            self.logger.debug(error_trace)

            if run_id:
                self.db.complete_run(run_id, 'failed', error=error_msg)
            self.db.log('ERROR', f"{command} failed: {error_msg}", {'error_type': type(e).__name__})

            return {
                'success': False,
                'run_id': run_id,
                'error': error_msg,
                'error_type': type(e).__name__,
                'trace': error_trace,
                'exit_code': 1,
            }


# ============================================
# COMMAND LINE
# ============================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=Config.TOOL_NAME,
                                     description="Certify linear escape rates of non-expansive maps")
    parser.add_argument('--version', action='version', version=f"{Config.TOOL_NAME} {Config.TOOL_VERSION}")
    parser.add_argument('--log-level', default=None, help="DEBUG, INFO, WARNING, ...")
    sub = parser.add_subparsers(dest='command', required=True)
    for command in cli_io.COMMANDS:
        p = sub.add_parser(command)
        source = p.add_mutually_exclusive_group(required=True)
        source.add_argument('problem', nargs='?', help="problem JSON file ('-' for stdin)")
        source.add_argument('--builtin', choices=suite.list_problems(), help="run a builtin problem")
        p.add_argument('--seed', type=int, default=None)
        p.add_argument('--tol', type=float, default=None)
        p.add_argument('--horizon', type=int, default=None)
        p.add_argument('--threads', type=int, default=None, help="worker threads (default RATECERT_THREADS)")
        p.add_argument('--db', default=None, help="run database path")
        p.add_argument('--out', default=None, help="write the report here instead of stdout")
        if command == 'horoballs':
            p.add_argument('--csv', default=None, help="also write the samples as CSV")
    return parser


def _load(args) -> Dict:
    if args.builtin:
        return suite.get_problem(args.builtin)
    text = sys.stdin.read() if args.problem == '-' else open(args.problem).read()
    return cli_io.parse_problem(text, args.command)


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    if args.threads is not None:
        Config.THREADS = max(1, args.threads)

    try:
        problem = _load(args)
        problem.pop('command', None)
        problem = cli_io.apply_overrides(cli_io.fill_defaults(problem, args.command),
                                         args.seed, args.tol, args.horizon)
    except (OSError, RateCertError, json.JSONDecodeError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return 1

    result = RateRunner(args.db).execute(args.command, problem)
    if not result['success']:
        print(f"❌ {result['error_type']}: {result['error']}", file=sys.stderr)
        return result['exit_code']

    text = cli_io.emit_report(result['report'])
    if args.out:
        with open(args.out, 'w') as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    if getattr(args, 'csv', None):
        with open(args.csv, 'w') as f:
            f.write(cli_io.horoball_csv(result['report']))
    return result['exit_code']


if __name__ == '__main__':
    sys.exit(main())
