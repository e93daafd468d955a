"""
Run Database
============
Tracks every rate, certify, check-space, game and horoball run
"""

import json
import sqlite3
import threading
from contextlib import contextmanager
from typing import Dict, List, Optional


class Database:
    def __init__(self, db_path="ratecert.db"):
        self.db_path = db_path
        # An in-memory database lives only as long as its connection
        self._memory = sqlite3.connect(':memory:', check_same_thread=False) if db_path == ':memory:' else None
        self._lock = threading.Lock()
        self.init_database()

    def get_connection(self):
        """Get database connection"""
        return self._memory or sqlite3.connect(self.db_path)

    @contextmanager
    def connection(self):
        """A fresh connection per call, or the shared in-memory one held under the lock"""
        if self._memory is None:
            conn = self.get_connection()
            try:
                yield conn
            finally:
                conn.close()
        else:
            with self._lock:
                yield self._memory

    def init_database(self):
        """Initialize database tables"""
        with self.connection() as conn:
            cursor = conn.cursor()

            # Runs table
            cursor.execute('''
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    started_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    completed_at TIMESTAMP,
                    command TEXT,
                    name TEXT,
                    fingerprint TEXT,
                    seed INTEGER,
                    status TEXT,
                    lower_bound REAL,
                    upper_bound REAL,
                    report TEXT,
                    error TEXT
                )
            ''')

            # System logs table
            cursor.execute('''
                CREATE TABLE IF NOT EXISTS logs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    timestamp TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    level TEXT,
                    message TEXT,
                    details TEXT
                )
            ''')

            conn.commit()

    def add_run(self, command: str, fingerprint: str = None, seed: int = None,
                name: str = None) -> int:
        """Start a new run"""
        with self.connection() as conn:
            cursor = conn.cursor()

            cursor.execute('''
                INSERT INTO runs (command, name, fingerprint, seed, status)
                VALUES (?, ?, ?, ?, ?)
            ''', (command, name, fingerprint, seed, 'started'))

            run_id = cursor.lastrowid
            conn.commit()
        return run_id

    def complete_run(self, run_id: int, status: str, lower: float = None, upper: float = None,
                     report: str = None, error: str = None):
        """Complete a run; report is the emitted report text"""
        with self.connection() as conn:
            cursor = conn.cursor()

            cursor.execute('''
                UPDATE runs
                SET completed_at = CURRENT_TIMESTAMP, status = ?,
                    lower_bound = ?, upper_bound = ?, report = ?, error = ?
                WHERE id = ?
            ''', (status, lower, upper, report, error, run_id))

            conn.commit()

    def get_run(self, run_id: int) -> Optional[Dict]:
        """Get run by ID"""
        with self.connection() as conn:
            cursor = conn.cursor()

            cursor.execute('SELECT * FROM runs WHERE id = ?', (run_id,))
            row = cursor.fetchone()
            columns = [desc[0] for desc in cursor.description]

        if not row:
            return None
        return dict(zip(columns, row))

    def get_recent_runs(self, limit: int = 10, command: str = None) -> List[Dict]:
        """Get recent runs, newest first"""
        with self.connection() as conn:
            cursor = conn.cursor()

            if command:
                cursor.execute('''
                    SELECT id, started_at, completed_at, command, name, fingerprint, seed, status,
                           lower_bound, upper_bound, error
                    FROM runs WHERE command = ?
                    ORDER BY id DESC
                    LIMIT ?
                ''', (command, limit))
            else:
                cursor.execute('''
                    SELECT id, started_at, completed_at, command, name, fingerprint, seed, status,
                           lower_bound, upper_bound, error
                    FROM runs
                    ORDER BY id DESC
                    LIMIT ?
                ''', (limit,))

            rows = cursor.fetchall()
            columns = [desc[0] for desc in cursor.description]

        return [dict(zip(columns, row)) for row in rows]

    def log(self, level: str, message: str, details: Dict = None):
        """Add a log entry"""
        with self.connection() as conn:
            cursor = conn.cursor()

            cursor.execute('''
                INSERT INTO logs (level, message, details)
                VALUES (?, ?, ?)
            ''', (level, message, json.dumps(details) if details else None))

            conn.commit()

    def get_logs(self, limit: int = 100, level: str = None) -> List[Dict]:
        """Get recent logs"""
        with self.connection() as conn:
            cursor = conn.cursor()

            if level:
                cursor.execute('''
                    SELECT * FROM logs
                    WHERE level = ?
                    ORDER BY id DESC
                    LIMIT ?
                ''', (level, limit))
            else:
                cursor.execute('''
                    SELECT * FROM logs
                    ORDER BY id DESC
                    LIMIT ?
                ''', (limit,))

            rows = cursor.fetchall()
            columns = [desc[0] for desc in cursor.description]

        return [dict(zip(columns, row)) for row in rows]

    def get_stats(self) -> Dict:
        """Get run statistics"""
        with self.connection() as conn:
            cursor = conn.cursor()

            stats = {}

            cursor.execute('SELECT COUNT(*) FROM runs')
            stats['total_runs'] = cursor.fetchone()[0]

            cursor.execute('SELECT status, COUNT(*) FROM runs GROUP BY status')
            stats['runs_by_status'] = dict(cursor.fetchall())

            cursor.execute('SELECT command, COUNT(*) FROM runs GROUP BY command')
            stats['runs_by_command'] = dict(cursor.fetchall())

            cursor.execute("SELECT COUNT(*) FROM runs WHERE status = 'failed'")
            stats['failed_runs'] = cursor.fetchone()[0]

        return stats
