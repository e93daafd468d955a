"""
Web Application
===============
JSON API over the rate runner and its run history
"""

import json
import os
from datetime import datetime

from flask import Flask, Response, jsonify, request

import cli_io
import suite
from config import Config, check_config, setup_logging
from rate_runner import RateRunner


def _encoded(payload, status: int = 200) -> Response:
    """Reports carry inf and 17-digit floats, so they go through the report encoder"""
    return Response(cli_io.dumps(payload), status=status, mimetype='application/json')


def create_app(db_path: str = None) -> Flask:
    app = Flask(__name__)
    runner = RateRunner(db_path)
    db = runner.db

    def run(command: str):
        name = request.args.get('builtin')
        body = request.get_data(as_text=True)
        if name:
            problem = suite.get_problem(name)
            if problem is None:
                return jsonify({'success': False, 'error': f"unknown builtin '{name}'"}), 404
            problem.pop('command', None)
            result = runner.execute(command, problem)
        elif not body.strip():
            return jsonify({'success': False, 'error': 'No problem provided'}), 400
        else:
            result = runner.execute(command, None, text=body)
        if result['success']:
            return _encoded(result)
        code = 400 if result['error_type'] in ('ProblemError', 'DimensionError', 'DomainError') else 500
        return jsonify({k: result[k] for k in ('success', 'error', 'error_type', 'run_id')}), code

    @app.route('/api/rate', methods=['POST'])
    def rate():
        """Certified escape-rate interval for a problem"""
        return run('rate')

    @app.route('/api/certify', methods=['POST'])
    def certify():
        return run('certify')

    @app.route('/api/check-space', methods=['POST'])
    def check_space():
        return run('check-space')

    @app.route('/api/game', methods=['POST'])
    def game():
        return run('game')

    @app.route('/api/horoballs', methods=['POST'])
    def horoballs():
        return run('horoballs')

    @app.route('/api/runs')
    def get_runs():
        """Get recent runs"""
        limit = request.args.get('limit', 10, type=int)
        command = request.args.get('command', None)
        return jsonify(db.get_recent_runs(limit, command))

    @app.route('/api/runs/<int:run_id>')
    def get_run(run_id):
        found = db.get_run(run_id)
        if not found:
            return jsonify({'success': False, 'error': f'Run {run_id} not found'}), 404
        if found['report']:
            found['report'] = json.loads(found['report'])
        return _encoded(found)

    @app.route('/api/stats')
    def get_stats():
        """Get run statistics"""
        return jsonify(db.get_stats())

    @app.route('/api/logs')
    def get_logs():
        """Get recent logs"""
        limit = request.args.get('limit', 100, type=int)
        level = request.args.get('level', None)
        return jsonify(db.get_logs(limit, level))

    @app.route('/health')
    def health():
        """Health check endpoint"""
        return jsonify({
            'status': 'healthy',
            'timestamp': datetime.now().isoformat(),
            'version': Config.TOOL_VERSION,
            'database': db.db_path == ':memory:' or os.path.exists(db.db_path),
        })

    return app


if __name__ == '__main__':
    print("\n📐 Escape Rate Certifier")
    print("=" * 50)
    setup_logging()

    if check_config():
        print(f"\n🌐 Starting web server on port {Config.WEB_PORT}...")
        print(f"\n   Health: http://localhost:{Config.WEB_PORT}/health")
        print("\n" + "=" * 50 + "\n")

        create_app().run(
            host='0.0.0.0',
            port=Config.WEB_PORT,
            debug=False
        )
    else:
        print("\n❌ Please fix the configuration first!")
