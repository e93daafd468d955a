#!/usr/bin/env python3
"""
Test Script
===========
Verify that the system is configured correctly
"""

import sys
from config import Config, check_config


def test_imports():
    """Test that all dependencies are installed"""
    print("🔍 Testing imports...")

    for name, package in (("NumPy", "numpy"), ("SciPy", "scipy"), ("jsonschema", "jsonschema"),
                          ("Flask", "flask"), ("cryptography", "cryptography")):
        try:
            __import__(package)
            print(f"  ✅ {name}")
        except ImportError:
            print(f"  ❌ {name} - run: pip install -r requirements.txt")
            return False

    return True


def test_config():
    """Test configuration"""
    print("\n🔍 Testing configuration...")

    if check_config():
        print("  ✅ Numeric settings valid")
        return True
    else:
        print("  ❌ Some settings are invalid")
        return False


def test_database():
    """Test database creation"""
    print("\n🔍 Testing database...")

    try:
        from database import Database
        db = Database(":memory:")
        db.get_stats()
        print("  ✅ Database working")
        return True
    except Exception as e:
        print(f"  ❌ Database error: {e}")
        return False


def test_suite():
    """Test the builtin problems validate"""
    print("\n🔍 Testing builtin suite...")

    try:
        import cli_io
        from suite import PROBLEMS

        for problem in PROBLEMS:
            cli_io.validate_problem(problem)
        print(f"  ✅ Builtin suite ({len(PROBLEMS)} problems)")
        return True
    except Exception as e:
        print(f"  ❌ Suite error: {e}")
        return False


def test_smoke_run():
    """Certify the Perron root of a 2x2 matrix end to end"""
    print("\n🔍 Testing a rate run...")

    try:
        import math
        from rate_runner import RateRunner
        from suite import get_problem

        problem = get_problem('perron-2x2')
        problem.pop('command')
        result = RateRunner(':memory:').execute('rate', problem)
        if not result['success']:
            print(f"  ❌ Run failed: {result['error']}")
            return False

        interval = result['report']['interval']
        if not (interval['lower'] <= math.log(3) + 1e-9 <= interval['upper'] + 2e-9):
            print(f"  ❌ Interval {interval} misses log 3")
            return False
        print(f"  ✅ perron-2x2: [{interval['lower']:.12g}, {interval['upper']:.12g}] {result['status']}")
        return True
    except Exception as e:
        print(f"  ❌ Rate run error: {e}")
        return False


def main():
    """Run all tests"""
    print("\n" + "="*50)
    print(f"🧪 {Config.TOOL_NAME} {Config.TOOL_VERSION} - System Check")
    print("="*50 + "\n")

    tests = [
        ("Dependencies", test_imports),
        ("Configuration", test_config),
        ("Database", test_database),
        ("Builtin Suite", test_suite),
        ("Rate Run", test_smoke_run),
    ]

    results = []
    for name, test_func in tests:
        try:
            result = test_func()
            results.append((name, result))
        except Exception as e:
            print(f"\n❌ {name} test crashed: {e}")
            results.append((name, False))

    # Summary
    print("\n" + "="*50)
    print("📊 Test Results")
    print("="*50 + "\n")

    passed = sum(1 for _, result in results if result)
    total = len(results)

    for name, result in results:
        status = "✅ PASS" if result else "❌ FAIL"
        print(f"{status} - {name}")

    print(f"\n{passed}/{total} tests passed")

    if passed == total:
        print("\n🎉 All checks passed! Run: python rate_runner.py rate --builtin perron-2x2")
        return 0
    else:
        print("\n⚠️  Some checks failed. Please fix the issues above.")
        return 1


if __name__ == '__main__':
    sys.exit(main())
